//! Dense per-step tables over states and state-action pairs.
//!
//! Layout conventions used across the crate:
//!
//! - steps `h` are 0-based and run over `0..horizon`;
//! - a [`StateActionTable`] stores `horizon * num_states * num_actions`
//!   entries indexed `(h * num_states + x) * num_actions + a`;
//! - a [`StateTable`] stores `steps * num_states` entries indexed
//!   `h * num_states + x` (value tables carry `horizon + 1` rows so the
//!   terminal row is addressable and identically zero).

use alloc::vec;
use alloc::vec::Vec;

/// Per-step table of reals over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl StateActionTable {
    /// All-zero table.
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self::filled(horizon, num_states, num_actions, 0.0)
    }

    /// Table with every entry set to `value`.
    pub fn filled(horizon: usize, num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            data: vec![value; horizon * num_states * num_actions],
        }
    }

    /// Builds a table from a flat buffer in the crate's layout.
    pub fn from_flat(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        data: Vec<f64>,
    ) -> Option<Self> {
        if data.len() == horizon * num_states * num_actions {
            Some(Self {
                horizon,
                num_states,
                num_actions,
                data,
            })
        } else {
            None
        }
    }

    /// Number of steps.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn offset(&self, step: usize, state: usize) -> usize {
        (step * self.num_states + state) * self.num_actions
    }

    /// Entry at `(h, x, a)`.
    #[inline]
    pub fn get(&self, step: usize, state: usize, action: usize) -> f64 {
        self.data[self.offset(step, state) + action]
    }

    /// Sets the entry at `(h, x, a)`.
    #[inline]
    pub fn set(&mut self, step: usize, state: usize, action: usize, value: f64) {
        let i = self.offset(step, state) + action;
        self.data[i] = value;
    }

    /// Action row at `(h, x)`.
    #[inline]
    pub fn row(&self, step: usize, state: usize) -> &[f64] {
        let o = self.offset(step, state);
        &self.data[o..o + self.num_actions]
    }

    /// Mutable action row at `(h, x)`.
    #[inline]
    pub fn row_mut(&mut self, step: usize, state: usize) -> &mut [f64] {
        let o = self.offset(step, state);
        &mut self.data[o..o + self.num_actions]
    }

    /// Flat backing slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |m, v| m.max(crate::num::abs(*v)))
    }
}

/// Per-step table of reals over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    steps: usize,
    num_states: usize,
    data: Vec<f64>,
}

impl StateTable {
    /// All-zero table with `steps` rows.
    pub fn zeros(steps: usize, num_states: usize) -> Self {
        Self {
            steps,
            num_states,
            data: vec![0.0; steps * num_states],
        }
    }

    /// Builds a table from a flat buffer in the crate's layout.
    pub fn from_flat(steps: usize, num_states: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() == steps * num_states {
            Some(Self {
                steps,
                num_states,
                data,
            })
        } else {
            None
        }
    }

    /// Number of rows.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of states.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Entry at `(h, x)`.
    #[inline]
    pub fn get(&self, step: usize, state: usize) -> f64 {
        self.data[step * self.num_states + state]
    }

    /// Sets the entry at `(h, x)`.
    #[inline]
    pub fn set(&mut self, step: usize, state: usize, value: f64) {
        self.data[step * self.num_states + state] = value;
    }

    /// State row at step `h`.
    #[inline]
    pub fn row(&self, step: usize) -> &[f64] {
        &self.data[step * self.num_states..(step + 1) * self.num_states]
    }

    /// Mutable state row at step `h`.
    #[inline]
    pub fn row_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.data[step * self.num_states..(step + 1) * self.num_states]
    }

    /// Flat backing slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
