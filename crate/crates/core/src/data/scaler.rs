use super::WindowSet;
use crate::error::{Error, Result};

/// Per-channel min-max map onto `[0, 1]`, fitted on training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Scaler {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::config(format!(
                "scaler needs matching non-empty bounds, got {} mins and {} maxes",
                min.len(),
                max.len()
            )));
        }
        for (c, (&lo, &hi)) in min.iter().zip(&max).enumerate() {
            if !(hi > lo) {
                return Err(Error::DegenerateChannel { channel: c, value: lo });
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    #[inline]
    pub fn forward(&self, channel: usize, x: f64) -> f64 {
        (x - self.min[channel]) / (self.max[channel] - self.min[channel])
    }

    #[inline]
    pub fn inverse(&self, channel: usize, y: f64) -> f64 {
        self.min[channel] + y * (self.max[channel] - self.min[channel])
    }

    /// Scales `ws` into `[0, 1]`, clamping out-of-range entries. Returns the
    /// scaled set (carrying this scaler) and the number of clamped entries.
    pub fn apply(&self, ws: &WindowSet) -> Result<(WindowSet, usize)> {
        self.check(ws)?;
        let v = ws.v();
        let mut out = ws.clone();
        let mut clamped = 0;
        for i in 0..out.len() {
            for (k, x) in out.row_mut(i).iter_mut().enumerate() {
                let y = self.forward(k % v, *x);
                if !(0.0..=1.0).contains(&y) {
                    clamped += 1;
                }
                *x = y.clamp(0.0, 1.0);
            }
        }
        out.set_scaler(Some(self.clone()));
        Ok((out, clamped))
    }

    /// Maps scaled windows back to signal units. No clamping.
    pub fn invert(&self, ws: &WindowSet) -> Result<WindowSet> {
        self.check(ws)?;
        let v = ws.v();
        let mut out = ws.clone();
        for i in 0..out.len() {
            for (k, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = self.inverse(k % v, *x);
            }
        }
        out.set_scaler(None);
        Ok(out)
    }

    fn check(&self, ws: &WindowSet) -> Result<()> {
        if ws.v() != self.channels() {
            return Err(Error::shape("scaler", (1, self.channels()), (1, ws.v())));
        }
        Ok(())
    }
}

/// Fits per-channel bounds on `train`.
pub fn fit_scaler(train: &WindowSet) -> Result<Scaler> {
    if train.is_empty() {
        return Err(Error::Empty("cannot fit a scaler on zero windows".into()));
    }
    let v = train.v();
    let mut min = vec![f64::INFINITY; v];
    let mut max = vec![f64::NEG_INFINITY; v];
    for row in train.rows() {
        for (k, &x) in row.iter().enumerate() {
            min[k % v] = min[k % v].min(x);
            max[k % v] = max[k % v].max(x);
        }
    }
    Scaler::new(min, max)
}
