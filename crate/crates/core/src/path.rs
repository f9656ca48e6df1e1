use serde::Serialize;

use crate::error::{Error, Result};

/// Time-indexed sequence of states (configurations or density fields).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
}

impl<S> PathRecord<S> {
    pub fn new() -> Self {
        PathRecord { times: Vec::new(), states: Vec::new() }
    }

    pub fn push(&mut self, t: f64, state: S) {
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> Option<&S> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    /// Index of the recorded time equal to `t` up to `tol`.
    pub fn index_of(&self, t: f64, tol: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or_else(|| Error::arg(format!("time {t} is not on the recorded grid")))
    }
}

impl<S> Default for PathRecord<S> {
    fn default() -> Self {
        Self::new()
    }
}
