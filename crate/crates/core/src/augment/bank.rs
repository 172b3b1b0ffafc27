use serde::{Deserialize, Serialize};

use super::ops::{AugmentationAction, AugmentationOp};
use crate::error::{Error, Result};

/// Ordered set of actions. An action's position is its index in the agent's
/// action space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    actions: Vec<AugmentationAction>,
}

/// All fourteen operators at their default magnitudes, indexed 0..13.
pub fn default_bank() -> Bank {
    Bank {
        actions: AugmentationOp::ALL
            .iter()
            .map(|&op| AugmentationAction::default_for(op))
            .collect(),
    }
}

impl Bank {
    pub fn new(actions: Vec<AugmentationAction>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("augmentation bank is empty"));
        }
        for a in &actions {
            a.validate()?;
        }
        Ok(Bank { actions })
    }

    /// The first `n` operators of the default bank (e.g. a ten-op bank).
    pub fn first(n: usize) -> Result<Self> {
        if n == 0 || n > AugmentationOp::ALL.len() {
            return Err(Error::invalid(format!("bank size {n} not in 1..=14")));
        }
        let mut bank = default_bank();
        bank.actions.truncate(n);
        Ok(bank)
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let actions = names
            .iter()
            .map(|n| {
                AugmentationOp::from_name(n.as_ref())
                    .map(AugmentationAction::default_for)
                    .ok_or_else(|| Error::invalid(format!("unknown augmentation `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Bank::new(actions)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&AugmentationAction> {
        self.actions
            .get(index)
            .ok_or_else(|| Error::invalid(format!("action {index} outside bank of {}", self.len())))
    }

    pub fn actions(&self) -> &[AugmentationAction] {
        &self.actions
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.actions.iter().map(|a| a.op.name()).collect()
    }

    pub fn index_of(&self, op: AugmentationOp) -> Option<usize> {
        self.actions.iter().position(|a| a.op == op)
    }
}

impl std::ops::Index<usize> for Bank {
    type Output = AugmentationAction;

    fn index(&self, i: usize) -> &AugmentationAction {
        &self.actions[i]
    }
}
