use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::Pmf;

/// Battery capacity in quanta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Finite(u64),
    Infinite,
}

impl Capacity {
    pub fn finite(self) -> Option<u64> {
        match self {
            Capacity::Finite(b) => Some(b),
            Capacity::Infinite => None,
        }
    }

    /// `min(level, capacity)`.
    pub fn cap(self, level: u64) -> u64 {
        match self {
            Capacity::Finite(b) => level.min(b),
            Capacity::Infinite => level,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(b) => write!(f, "{b}"),
            Capacity::Infinite => f.write_str("inf"),
        }
    }
}

/// One problem instance: i.i.d. demand and generation, storage and peak draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub p_x: Pmf,
    pub p_e: Pmf,
    pub capacity: Capacity,
    /// Peak energy drawn from the battery per slot, in quanta.
    pub p_hat: u64,
}

impl GridModel {
    pub fn new(p_x: Pmf, p_e: Pmf, capacity: Capacity, p_hat: u64) -> Result<Self> {
        let model = Self {
            p_x,
            p_e,
            capacity,
            p_hat,
        };
        model.validate()?;
        Ok(model)
    }

    /// Binary demand and generation with `P_hat = 1`.
    pub fn binary(q_x: f64, p_e: f64, capacity: Capacity) -> Result<Self> {
        Self::new(Pmf::bernoulli(q_x)?, Pmf::bernoulli(p_e)?, capacity, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_x.len() < 2 {
            return Err(Error::InvalidModel("demand alphabet needs X_max >= 1".into()));
        }
        if self.p_hat == 0 {
            return Err(Error::InvalidModel("peak draw must be positive".into()));
        }
        if self.mean_renewable() > self.p_hat as f64 + 1e-12 {
            return Err(Error::InvalidModel(format!(
                "mean generation {} exceeds peak draw {}",
                self.mean_renewable(),
                self.p_hat
            )));
        }
        Ok(())
    }

    pub fn x_size(&self) -> usize {
        self.p_x.len()
    }

    pub fn x_max(&self) -> usize {
        self.p_x.max_point()
    }

    pub fn e_max(&self) -> usize {
        self.p_e.max_point()
    }

    /// Average generation rate `E[E]`.
    pub fn mean_renewable(&self) -> f64 {
        self.p_e.mean()
    }

    pub fn with_capacity(&self, capacity: Capacity) -> Self {
        Self {
            capacity,
            ..self.clone()
        }
    }
}
