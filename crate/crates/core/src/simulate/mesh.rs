use crate::error::{Error, Result};

/// Number of logarithmically spaced points after the initial `0`.
pub const LOG_MESH_POINTS: usize = 10_000;

/// Smallest positive mesh point relative to the final time.
pub const LOG_MESH_START: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    points: Vec<f64>,
}

impl TimeMesh {
    /// Requires `points[0] = 0` and strict increase.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.first() != Some(&0.0) {
            return Err(Error::InvalidArgument("time mesh must start at 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("time mesh must be finite and strictly increasing".into()));
        }
        Ok(TimeMesh { points })
    }

    /// `0` followed by `count` log-spaced points from `start·T` to `T`.
    pub fn logarithmic_with(t_end: f64, count: usize, start: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {t_end}")));
        }
        if count < 2 || !(start > 0.0 && start < 1.0) {
            return Err(Error::InvalidArgument("log mesh needs count >= 2 and 0 < start < 1".into()));
        }
        let lo = start.log10();
        let mut points = Vec::with_capacity(count + 1);
        points.push(0.0);
        for k in 0..count {
            let e = lo * (1.0 - k as f64 / (count - 1) as f64);
            points.push(t_end * 10f64.powf(e));
        }
        *points.last_mut().expect("non-empty") = t_end;
        TimeMesh::new(points)
    }

    pub fn uniform(t_end: f64, intervals: usize) -> Result<Self> {
        if !(t_end > 0.0) || intervals == 0 {
            return Err(Error::InvalidArgument("uniform mesh needs T > 0 and at least one interval".into()));
        }
        TimeMesh::new((0..=intervals).map(|k| t_end * k as f64 / intervals as f64).collect())
    }

    /// Inserts the midpoint of every interval.
    pub fn refined(&self) -> Self {
        let mut points = Vec::with_capacity(2 * self.points.len() - 1);
        for w in self.points.windows(2) {
            points.push(w[0]);
            points.push(0.5 * (w[0] + w[1]));
        }
        points.push(self.t_end());
        TimeMesh { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.points.last().expect("mesh is non-empty")
    }
}

/// The standard mesh: `0`, then 10 000 log-spaced points from `1e-20·T` to `T`.
pub fn make_log_mesh(t_end: f64) -> Result<TimeMesh> {
    TimeMesh::logarithmic_with(t_end, LOG_MESH_POINTS, LOG_MESH_START)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mesh_layout() {
        let m = make_log_mesh(1.0).unwrap();
        assert_eq!(m.len(), 10_001);
        assert_eq!(m.points()[0], 0.0);
        assert!((m.points()[1] - 1e-20).abs() <= 1e-34);
        assert_eq!(m.points()[10_000], 1.0);
        let m = make_log_mesh(1000.0).unwrap();
        assert!((m.points()[1] - 1e-17).abs() <= 1e-31);
        assert_eq!(m.t_end(), 1000.0);
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        assert!(make_log_mesh(0.0).is_err());
        assert!(make_log_mesh(-1.0).is_err());
    }

    #[test]
    fn refinement_doubles_intervals() {
        let m = TimeMesh::uniform(1.0, 4).unwrap().refined();
        assert_eq!(m.len(), 9);
        assert_eq!(m.points()[1], 0.125);
    }
}
