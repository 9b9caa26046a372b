//! Occupation-number bases for fixed particle number on a periodic chain.
//!
//! Each spin species is stored as an L-bit mask (bit j = site j occupied).
//! The two species never mix under hopping, so the combined basis is the
//! Cartesian product of the per-spin sectors and fermionic signs can be
//! evaluated within one sector at a time.

use crate::error::{Error, Result};

/// Largest supported chain length. Masks are `u32`; desk-scale targets are
/// L <= 12, so a machine word leaves plenty of headroom.
pub const MAX_SITES: usize = 32;

/// Physical parameters of the Hubbard ring.
///
/// Periodic boundary conditions are implied everywhere: site arithmetic is
/// modulo `sites`. Units: `hopping` sets the energy scale, `lattice_constant`
/// the length scale, and `charge` is fixed to 1 (atomic units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub sites: usize,
    pub n_up: usize,
    pub n_down: usize,
    /// Hopping energy t0 (> 0).
    pub hopping: f64,
    /// On-site repulsion U (>= 0).
    pub repulsion: f64,
    /// Lattice constant a (> 0).
    pub lattice_constant: f64,
    /// Electron charge e; fixed to 1 in atomic units.
    pub charge: f64,
}

impl SystemParams {
    pub fn new(
        sites: usize,
        n_up: usize,
        n_down: usize,
        hopping: f64,
        repulsion: f64,
        lattice_constant: f64,
    ) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 sites, got {sites}"
            )));
        }
        if sites > MAX_SITES {
            return Err(Error::InvalidParameter(format!(
                "at most {MAX_SITES} sites supported, got {sites}"
            )));
        }
        if n_up > sites || n_down > sites {
            return Err(Error::InvalidParameter(format!(
                "particle counts ({n_up}, {n_down}) exceed {sites} sites"
            )));
        }
        if !(hopping > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hopping energy must be positive, got {hopping}"
            )));
        }
        if !(repulsion >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "on-site repulsion must be non-negative, got {repulsion}"
            )));
        }
        if !(lattice_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice constant must be positive, got {lattice_constant}"
            )));
        }
        Ok(SystemParams {
            sites,
            n_up,
            n_down,
            hopping,
            repulsion,
            lattice_constant,
            charge: 1.0,
        })
    }

    /// Half filling with one species count rounded down for odd L.
    pub fn half_filled(sites: usize, hopping: f64, repulsion: f64, lattice_constant: f64) -> Result<Self> {
        Self::new(sites, sites / 2, sites / 2, hopping, repulsion, lattice_constant)
    }
}

/// Binomial coefficient with overflow checking.
pub fn binomial(n: usize, k: usize) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul((n - i) as u64)
            .ok_or(Error::DimensionOverflow {
                sites: n,
                n_up: k,
                n_down: 0,
            })?;
        acc /= (i + 1) as u64;
    }
    Ok(acc)
}

/// All L-bit masks with exactly N set bits, strictly increasing by integer
/// value (Gosper's hack).
pub fn enumerate_sector(sites: usize, n: usize) -> Result<Vec<u32>> {
    if sites > MAX_SITES {
        return Err(Error::InvalidParameter(format!(
            "at most {MAX_SITES} sites supported, got {sites}"
        )));
    }
    if n > sites {
        return Err(Error::InvalidParameter(format!(
            "cannot place {n} particles on {sites} sites"
        )));
    }
    let count = binomial(sites, n)? as usize;
    let mut states = Vec::with_capacity(count);
    if n == 0 {
        states.push(0u32);
        return Ok(states);
    }
    let limit: u64 = 1u64 << sites;
    let mut mask: u64 = (1u64 << n) - 1;
    while mask < limit {
        states.push(mask as u32);
        // next mask with the same popcount
        let lowest = mask & mask.wrapping_neg();
        let ripple = mask + lowest;
        let ones = ((mask ^ ripple) >> 2) / lowest;
        mask = ripple | ones;
        if ripple >= limit {
            break;
        }
    }
    debug_assert_eq!(states.len(), count);
    Ok(states)
}

/// Combined sector dimension C(L, N_up) * C(L, N_down).
pub fn dimension(sites: usize, n_up: usize, n_down: usize) -> Result<usize> {
    if n_up > sites || n_down > sites {
        return Err(Error::InvalidParameter(format!(
            "particle counts ({n_up}, {n_down}) exceed {sites} sites"
        )));
    }
    let d = binomial(sites, n_up)? as u128 * binomial(sites, n_down)? as u128;
    usize::try_from(d).map_err(|_| Error::DimensionOverflow {
        sites,
        n_up,
        n_down,
    })
}

/// Outcome of applying c†_{j+dir} c_j to a single-species mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    Moved { mask: u32, sign: i8 },
    Blocked,
}

/// Apply c†_{j+dir} c_j with periodic wraparound.
///
/// The sign is the parity of the number of occupied sites strictly between
/// the two bond endpoints in the canonical site ordering 0..L-1. For an
/// interior bond nothing lies between adjacent sites and the sign is +1; on
/// the wrap link the string runs through the chain interior, giving
/// (-1)^(N-1) for N particles in the sector.
pub fn hop_sign_and_target(mask: u32, site: usize, dir: i32, sites: usize) -> Hop {
    debug_assert!(site < sites);
    debug_assert!(dir == 1 || dir == -1);
    let target = (site as i64 + dir as i64).rem_euclid(sites as i64) as usize;
    let src_bit = 1u32 << site;
    let tgt_bit = 1u32 << target;
    if mask & src_bit == 0 || mask & tgt_bit != 0 {
        return Hop::Blocked;
    }
    let (lo, hi) = (site.min(target), site.max(target));
    let crossings = if hi - lo == 1 {
        0
    } else {
        // wrap link: occupied sites in the open interval (lo, hi)
        let interior = ((1u32 << hi) - 1) & !((1u32 << (lo + 1)) - 1);
        (mask & interior).count_ones()
    };
    let sign = if crossings % 2 == 0 { 1 } else { -1 };
    Hop::Moved {
        mask: (mask & !src_bit) | tgt_bit,
        sign,
    }
}

/// Enumerated occupation basis for one (N_up, N_down) sector.
///
/// The combined index of the pair `(up_states[i], down_states[k])` is
/// `i * down_states.len() + k`.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub up_states: Vec<u32>,
    pub down_states: Vec<u32>,
    dim: usize,
}

impl SectorBasis {
    pub fn build(params: &SystemParams) -> Result<Self> {
        let up_states = enumerate_sector(params.sites, params.n_up)?;
        let down_states = enumerate_sector(params.sites, params.n_down)?;
        let dim = dimension(params.sites, params.n_up, params.n_down)?;
        debug_assert_eq!(dim, up_states.len() * down_states.len());
        Ok(SectorBasis {
            up_states,
            down_states,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of an up-sector mask; the sector lists are sorted so this is
    /// a binary search.
    pub fn up_index(&self, mask: u32) -> Option<usize> {
        self.up_states.binary_search(&mask).ok()
    }

    pub fn down_index(&self, mask: u32) -> Option<usize> {
        self.down_states.binary_search(&mask).ok()
    }

    /// Linear index of a combined configuration.
    pub fn index_of(&self, up: u32, down: u32) -> Option<usize> {
        let iu = self.up_index(up)?;
        let id = self.down_index(down)?;
        Some(iu * self.down_states.len() + id)
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn state(&self, index: usize) -> (u32, u32) {
        let nd = self.down_states.len();
        (self.up_states[index / nd], self.down_states[index % nd])
    }
}
