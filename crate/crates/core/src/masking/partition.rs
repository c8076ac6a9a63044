use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::games::{Coalition, MAX_PLAYERS};

/// Disjoint groups of coordinates acting as players.
///
/// Coordinates that belong to no group are never revealed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct Partition {
    dim: usize,
    groups: Vec<Vec<usize>>,
    owner: Vec<Option<u8>>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    dim: usize,
    groups: Vec<Vec<usize>>,
}

impl TryFrom<PartitionRepr> for Partition {
    type Error = crate::Error;

    fn try_from(r: PartitionRepr) -> Result<Self> {
        Partition::new(r.dim, r.groups)
    }
}

impl From<Partition> for PartitionRepr {
    fn from(p: Partition) -> Self {
        PartitionRepr {
            dim: p.dim,
            groups: p.groups,
        }
    }
}

impl Partition {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() || groups.len() > MAX_PLAYERS {
            return Err(domain(format!(
                "a partition needs 1..={MAX_PLAYERS} groups, got {}",
                groups.len()
            )));
        }
        let mut owner = vec![None; dim];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(domain(format!("group {g} is empty")));
            }
            for &i in members {
                match owner.get_mut(i) {
                    None => return Err(domain(format!("index {i} outside dimension {dim}"))),
                    Some(Some(other)) => {
                        return Err(domain(format!(
                            "index {i} belongs to groups {other} and {g}: groups overlap"
                        )))
                    }
                    Some(slot) => *slot = Some(g as u8),
                }
            }
        }
        Ok(Partition { dim, groups, owner })
    }

    pub fn singletons(dim: usize) -> Result<Self> {
        Partition::new(dim, (0..dim).map(|i| vec![i]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn players(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, player: usize) -> &[usize] {
        &self.groups[player]
    }

    /// Which coordinates are revealed when exactly `coalition` is revealed.
    pub fn feature_mask(&self, coalition: Coalition) -> Result<Vec<bool>> {
        if coalition.players() != self.players() {
            return Err(domain(format!(
                "coalition over {} players used with a partition of {} groups",
                coalition.players(),
                self.players()
            )));
        }
        Ok(self
            .owner
            .iter()
            .map(|o| o.is_some_and(|g| coalition.contains(g as usize)))
            .collect())
    }
}
