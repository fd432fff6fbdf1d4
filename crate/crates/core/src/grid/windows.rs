//! Sliding-window extraction: w consecutive encoded vectors of one zone
//! predict the label and gamma class of the following interval.

use super::assemble::CellIntervalVector;
use super::GridError;

/// One zone's gapless interval series.
#[derive(Debug, Clone)]
pub struct ZoneSeries {
    pub zone_index: usize,
    pub f: usize,
    /// n_intervals × f, row-major
    pub encoded: Vec<f64>,
    pub gamma: Vec<u8>,
    pub accident: Vec<bool>,
}

impl ZoneSeries {
    pub fn n_intervals(&self) -> usize {
        self.gamma.len()
    }
}

/// One training/evaluation sample.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub zone_index: usize,
    /// ordinal of the predicted interval (T+1)
    pub target_interval: usize,
    /// w × f, row-major by step
    pub sequence: Vec<f64>,
    pub target_label: u8,
    pub target_gamma: u8,
}

/// Builds every (zone, T) sample with a full w-length history and an in-range
/// target. Windows never cross zones. Errors when w exceeds a zone's
/// interval count.
pub fn build_windows(zones: &[ZoneSeries], w: usize) -> Result<Vec<WindowSample>, GridError> {
    assert!(w >= 1, "window length must be at least 1");
    let mut out = Vec::new();
    for z in zones {
        let n = z.n_intervals();
        if w > n {
            return Err(GridError::WindowTooLong { w, intervals: n });
        }
        for t in (w - 1)..(n - 1) {
            let target = t + 1;
            let label = u8::from(z.accident[target]);
            let gamma = z.gamma[target];
            debug_assert_eq!(
                label > 0,
                gamma > 0,
                "accident flag and gamma class must agree"
            );
            out.push(WindowSample {
                zone_index: z.zone_index,
                target_interval: target,
                sequence: z.encoded[(t + 1 - w) * z.f..(t + 1) * z.f].to_vec(),
                target_label: label,
                target_gamma: gamma,
            });
        }
    }
    Ok(out)
}

/// Converts assembled per-zone vectors into `ZoneSeries`, reading the
/// accident flag from the accident-count column.
pub fn series_from_vectors(
    per_zone: &[Vec<CellIntervalVector>],
    accident_count_col: usize,
) -> Vec<ZoneSeries> {
    per_zone
        .iter()
        .enumerate()
        .map(|(zone_index, vectors)| {
            let f = vectors.first().map(|v| v.encoded.len()).unwrap_or(0);
            let mut encoded = Vec::with_capacity(vectors.len() * f);
            let mut gamma = Vec::with_capacity(vectors.len());
            let mut accident = Vec::with_capacity(vectors.len());
            for v in vectors {
                encoded.extend_from_slice(&v.encoded);
                gamma.push(v.gamma_class);
                accident.push(v.encoded[accident_count_col] > 0.0);
            }
            ZoneSeries {
                zone_index,
                f,
                encoded,
                gamma,
                accident,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(zone: usize, n: usize, f: usize, accidents: &[usize]) -> ZoneSeries {
        let mut encoded = vec![0.0; n * f];
        let mut gamma = vec![0u8; n];
        let mut accident = vec![false; n];
        for &i in accidents {
            encoded[i * f] = 1.0;
            gamma[i] = 2;
            accident[i] = true;
        }
        ZoneSeries {
            zone_index: zone,
            f,
            encoded,
            gamma,
            accident,
        }
    }

    #[test]
    fn six_intervals_window_four_gives_two_samples() {
        let z = series(0, 6, 3, &[]);
        let samples = build_windows(&[z], 4).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].target_interval, 4);
        assert_eq!(samples[1].target_interval, 5);
    }

    #[test]
    fn all_zero_zone_has_all_zero_targets() {
        let z = series(0, 10, 2, &[]);
        let samples = build_windows(&[z], 3).unwrap();
        assert!(samples.iter().all(|s| s.target_label == 0 && s.target_gamma == 0));
    }

    #[test]
    fn planted_accident_hits_exactly_one_target() {
        let z = series(0, 12, 2, &[9]);
        let samples = build_windows(&[z], 4).unwrap();
        let hits: Vec<&WindowSample> = samples.iter().filter(|s| s.target_label == 1).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].target_interval, 9);
        assert_eq!(hits[0].target_gamma, 2);
    }

    #[test]
    fn window_longer_than_zone_errors() {
        let z = series(0, 3, 2, &[]);
        assert!(matches!(
            build_windows(&[z], 4),
            Err(GridError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn windows_never_cross_zones() {
        let a = series(0, 5, 1, &[4]);
        let b = series(1, 5, 1, &[]);
        let samples = build_windows(&[a, b], 2).unwrap();
        for s in &samples {
            if s.zone_index == 1 {
                assert_eq!(s.target_label, 0);
            }
        }
        assert_eq!(samples.len(), 6);
    }
}
