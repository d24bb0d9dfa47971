//! Damped incremental statistics.
//!
//! Every contribution to a damped sum is weighted by `2^(-lambda * age)`, so a
//! statistic with decay rate `lambda` has a half-life of `1 / lambda` seconds.
//! Updates are O(1): the stored sums are scaled by the decay accumulated since
//! the previous update and the new value is added with weight 1.

use crate::dataset::Direction;
use crate::error::{Error, Result};

use super::schema::DecayRate;

/// `2^(-lambda * dt)`, in `(0, 1]` for any finite `dt >= 0`.
pub fn decay_factor(dt: f64, rate: DecayRate) -> Result<f64> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::Contract(format!("elapsed time must be non-negative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(1.0);
    }
    Ok((-rate.lambda() * dt).exp2())
}

/// `(weight, mean, variance)` view of a [`DampedStat1D`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DampedStat1D {
    /// Decayed count of observations.
    pub w: f64,
    /// Decayed linear sum.
    pub ls: f64,
    /// Decayed sum of squares.
    pub ss: f64,
    pub t_last: f64,
}

impl DampedStat1D {
    pub fn is_empty(&self) -> bool {
        self.w == 0.0
    }

    fn elapsed(&self, t: f64) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        if t < self.t_last {
            return Err(Error::Contract(format!(
                "timestamp {t} precedes last update {}",
                self.t_last
            )));
        }
        Ok(t - self.t_last)
    }

    pub fn update(&mut self, x: f64, t: f64, rate: DecayRate) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Contract(format!("non-finite observation {x}")));
        }
        let gamma = decay_factor(self.elapsed(t)?, rate)?;
        self.w = gamma * self.w + 1.0;
        self.ls = gamma * self.ls + x;
        self.ss = gamma * self.ss + x * x;
        self.t_last = t;
        Ok(())
    }

    pub fn read(&self) -> Moments {
        if self.w == 0.0 {
            return Moments::default();
        }
        let mean = self.ls / self.w;
        let variance = (self.ss / self.w - mean * mean).max(0.0);
        Moments {
            weight: self.w,
            mean,
            variance,
        }
    }

    /// Reads the statistic as seen at time `t >= t_last`, without mutating it.
    /// Mean and variance are scale-free, so only the weight changes.
    pub fn read_at(&self, t: f64, rate: DecayRate) -> Result<Moments> {
        let gamma = decay_factor(self.elapsed(t)?, rate)?;
        let mut m = self.read();
        m.weight *= gamma;
        Ok(m)
    }
}

/// `(magnitude, radius, covariance, pcc)` view of a [`DampedStat2D`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Joint {
    pub magnitude: f64,
    pub radius: f64,
    pub covariance: f64,
    pub pcc: f64,
}

/// Joint statistic over the two directions of one bidirectional stream.
///
/// `sr` accumulates the product of each new residual with the opposite
/// direction's most recent residual, decayed on its own clock `t_sr`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DampedStat2D {
    /// Outbound side.
    pub a: DampedStat1D,
    /// Inbound side.
    pub b: DampedStat1D,
    pub sr: f64,
    pub t_sr: f64,
    pub last_res_a: f64,
    pub last_res_b: f64,
}

impl DampedStat2D {
    pub fn side(&self, dir: Direction) -> &DampedStat1D {
        match dir {
            Direction::Outbound => &self.a,
            Direction::Inbound => &self.b,
        }
    }

    fn is_empty(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    fn sr_elapsed(&self, t: f64) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        if t < self.t_sr {
            return Err(Error::Contract(format!(
                "timestamp {t} precedes last joint update {}",
                self.t_sr
            )));
        }
        Ok(t - self.t_sr)
    }

    pub fn update(&mut self, x: f64, dir: Direction, t: f64, rate: DecayRate) -> Result<()> {
        let gamma = decay_factor(self.sr_elapsed(t)?, rate)?;
        let (side, other_res) = match dir {
            Direction::Outbound => (&mut self.a, self.last_res_b),
            Direction::Inbound => (&mut self.b, self.last_res_a),
        };
        side.update(x, t, rate)?;
        let residual = x - side.read().mean;
        self.sr = gamma * self.sr + residual * other_res;
        self.t_sr = t;
        match dir {
            Direction::Outbound => self.last_res_a = residual,
            Direction::Inbound => self.last_res_b = residual,
        }
        Ok(())
    }

    pub fn read_at(&self, t: f64, rate: DecayRate) -> Result<Joint> {
        let a = self.a.read_at(t, rate)?;
        let b = self.b.read_at(t, rate)?;
        let sr = self.sr * decay_factor(self.sr_elapsed(t)?, rate)?;
        Ok(joint_of(&a, &b, sr))
    }

    pub fn read(&self) -> Joint {
        joint_of(&self.a.read(), &self.b.read(), self.sr)
    }
}

fn joint_of(a: &Moments, b: &Moments, sr: f64) -> Joint {
    let magnitude = (a.mean * a.mean + b.mean * b.mean).sqrt();
    let radius = (a.variance * a.variance + b.variance * b.variance).sqrt();
    let total = a.weight + b.weight;
    let covariance = if total == 0.0 { 0.0 } else { sr / total };
    let denom = a.std() * b.std();
    let pcc = if denom == 0.0 {
        0.0
    } else {
        (covariance / denom).clamp(-1.0, 1.0)
    };
    Joint {
        magnitude,
        radius,
        covariance,
        pcc,
    }
}
