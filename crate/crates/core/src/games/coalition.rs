use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Largest player count a [`Coalition`] can address.
pub const MAX_PLAYERS: usize = 64;

/// A subset of the players `{0, …, n-1}`, stored as a bit pattern.
///
/// Ordering and hashing follow the bit pattern, so sorting coalitions of the
/// same game reproduces the canonical enumeration order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "CoalitionRepr", into = "CoalitionRepr")]
pub struct Coalition {
    players: u8,
    bits: u64,
}

#[derive(Serialize, Deserialize)]
struct CoalitionRepr {
    players: usize,
    members: Vec<usize>,
}

impl TryFrom<CoalitionRepr> for Coalition {
    type Error = crate::Error;

    fn try_from(r: CoalitionRepr) -> Result<Self> {
        Coalition::from_members(r.players, r.members)
    }
}

impl From<Coalition> for CoalitionRepr {
    fn from(c: Coalition) -> Self {
        CoalitionRepr {
            players: c.players(),
            members: c.members().collect(),
        }
    }
}

fn mask(n: usize) -> u64 {
    if n == MAX_PLAYERS {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_players(n: usize) -> Result<()> {
    if n == 0 || n > MAX_PLAYERS {
        return Err(domain(format!(
            "player count must be in 1..={MAX_PLAYERS}, got {n}"
        )));
    }
    Ok(())
}

impl Coalition {
    pub fn empty(players: usize) -> Result<Self> {
        check_players(players)?;
        Ok(Coalition {
            players: players as u8,
            bits: 0,
        })
    }

    pub fn full(players: usize) -> Result<Self> {
        check_players(players)?;
        Ok(Coalition {
            players: players as u8,
            bits: mask(players),
        })
    }

    pub fn from_bits(players: usize, bits: u64) -> Result<Self> {
        check_players(players)?;
        if bits & !mask(players) != 0 {
            return Err(domain(format!(
                "bit pattern {bits:#x} has members outside 0..{players}"
            )));
        }
        Ok(Coalition {
            players: players as u8,
            bits,
        })
    }

    pub fn from_members(players: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        check_players(players)?;
        let mut bits = 0u64;
        for m in members {
            if m >= players {
                return Err(domain(format!("member {m} outside 0..{players}")));
            }
            bits |= 1 << m;
        }
        Ok(Coalition {
            players: players as u8,
            bits,
        })
    }

    pub fn players(self) -> usize {
        self.players as usize
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn contains(self, player: usize) -> bool {
        player < self.players() && self.bits >> player & 1 == 1
    }

    /// Panics if `player` is out of range.
    pub fn with(self, player: usize) -> Self {
        assert!(player < self.players(), "player {player} out of range");
        Coalition {
            bits: self.bits | 1 << player,
            ..self
        }
    }

    pub fn without(self, player: usize) -> Self {
        Coalition {
            bits: self.bits & !(1u64.checked_shl(player as u32).unwrap_or(0)),
            ..self
        }
    }

    pub fn complement(self) -> Self {
        Coalition {
            bits: !self.bits & mask(self.players()),
            ..self
        }
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut bits = self.bits;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// All `2^n` coalitions in ascending bit order. Requires `n < 64`.
    pub fn all(players: usize) -> Result<impl Iterator<Item = Coalition>> {
        check_players(players)?;
        if players >= MAX_PLAYERS {
            return Err(domain("cannot enumerate coalitions of 64 players"));
        }
        Ok((0..1u64 << players).map(move |bits| Coalition {
            players: players as u8,
            bits,
        }))
    }

    /// The `i`-th coalition (ascending bit order) among those excluding `player`.
    pub(crate) fn nth_excluding(players: usize, player: usize, i: u64) -> Coalition {
        let low = i & ((1u64 << player) - 1);
        let high = (i >> player) << (player + 1);
        Coalition {
            players: players as u8,
            bits: low | high,
        }
    }

    /// All `2^(n-1)` coalitions not containing `player`, in ascending bit order.
    pub fn excluding(players: usize, player: usize) -> Result<impl Iterator<Item = Coalition>> {
        check_players(players)?;
        if player >= players {
            return Err(domain(format!("player {player} outside 0..{players}")));
        }
        if players > MAX_PLAYERS - 1 {
            return Err(domain("cannot enumerate coalitions of 64 players"));
        }
        Ok((0..1u64 << (players - 1)).map(move |i| Coalition::nth_excluding(players, player, i)))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, m) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}/{}", self.players)
    }
}
