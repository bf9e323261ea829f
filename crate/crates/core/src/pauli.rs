//! Pauli strings on up to 64 spins, in the symplectic (X-mask, Z-mask) representation.
//!
//! A string is stored as `phase * X^{x_mask} * Z^{z_mask}`, with the Z factor
//! acting first. The phase is an exact fourth root of unity, so all group
//! algebra is integer arithmetic; no floating point enters until a string is
//! applied to an amplitude.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PauliError {
    #[error("width {0} exceeds the 64-spin fast path")]
    WidthTooLarge(usize),
    #[error("mask {mask:#x} has bits outside width {n}")]
    MaskOutOfRange { mask: u64, n: usize },
}

/// Fourth root of unity, `i^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PlusOne,
    PlusI,
    MinusOne,
    MinusI,
}

impl Phase {
    fn from_exponent(k: u32) -> Self {
        match k % 4 {
            0 => Phase::PlusOne,
            1 => Phase::PlusI,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    fn exponent(self) -> u32 {
        match self {
            Phase::PlusOne => 0,
            Phase::PlusI => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_exponent(self.exponent() + other.exponent())
    }

    /// Multiply by (-1)^parity.
    fn mul_sign(self, parity: u32) -> Phase {
        Phase::from_exponent(self.exponent() + 2 * (parity & 1))
    }

    /// Real value, if the phase is ±1.
    pub fn as_real(self) -> Option<f64> {
        match self {
            Phase::PlusOne => Some(1.0),
            Phase::MinusOne => Some(-1.0),
            _ => None,
        }
    }

    pub fn as_complex(self) -> Complex64 {
        match self {
            Phase::PlusOne => Complex64::new(1.0, 0.0),
            Phase::PlusI => Complex64::new(0.0, 1.0),
            Phase::MinusOne => Complex64::new(-1.0, 0.0),
            Phase::MinusI => Complex64::new(0.0, -1.0),
        }
    }
}

/// A computational-basis state on `n` spins. Bit j set means spin j is
/// flipped relative to the all-up vacuum (σ^z eigenvalue -1 on that spin).
pub type Bits = u64;

/// Tensor product of Pauli operators: `phase * X^{x_mask} * Z^{z_mask}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    n: usize,
    x_mask: u64,
    z_mask: u64,
    phase: Phase,
}

impl PauliString {
    pub fn new(n: usize, x_mask: u64, z_mask: u64, phase: Phase) -> Result<Self, PauliError> {
        if n > 64 {
            return Err(PauliError::WidthTooLarge(n));
        }
        let width_mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        for mask in [x_mask, z_mask] {
            if mask & !width_mask != 0 {
                return Err(PauliError::MaskOutOfRange { mask, n });
            }
        }
        Ok(PauliString { n, x_mask, z_mask, phase })
    }

    pub fn identity(n: usize) -> Self {
        PauliString::new(n, 0, 0, Phase::PlusOne).expect("identity width")
    }

    /// σ^x on every link in `mask`.
    pub fn x_string(n: usize, mask: u64) -> Self {
        PauliString::new(n, mask, 0, Phase::PlusOne).expect("x string mask")
    }

    /// σ^z on every link in `mask`.
    pub fn z_string(n: usize, mask: u64) -> Self {
        PauliString::new(n, 0, mask, Phase::PlusOne).expect("z string mask")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x_mask
    }

    pub fn z_mask(&self) -> u64 {
        self.z_mask
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    /// Apply to a basis state: returns the flipped bits and the accumulated
    /// phase. The Z factor acts on the incoming bits, then X flips them.
    pub fn apply(&self, bits: Bits) -> (Bits, Phase) {
        let phase = self.phase.mul_sign((self.z_mask & bits).count_ones());
        (bits ^ self.x_mask, phase)
    }

    /// True iff the symplectic form vanishes:
    /// |P.x ∧ Q.z| + |P.z ∧ Q.x| is even.
    pub fn commutes(&self, other: &PauliString) -> bool {
        assert_eq!(self.n, other.n, "pauli width mismatch");
        let cross = (self.x_mask & other.z_mask).count_ones()
            + (self.z_mask & other.x_mask).count_ones();
        cross % 2 == 0
    }

    /// Group product `self * other` (self applied last).
    pub fn multiply(&self, other: &PauliString) -> PauliString {
        assert_eq!(self.n, other.n, "pauli width mismatch");
        let phase = self
            .phase
            .mul(other.phase)
            .mul_sign((self.z_mask & other.x_mask).count_ones());
        PauliString {
            n: self.n,
            x_mask: self.x_mask ^ other.x_mask,
            z_mask: self.z_mask ^ other.z_mask,
            phase,
        }
    }

    /// Number of links acted on by σ^x; the string length l_γ of an X string.
    pub fn string_weight(&self) -> u32 {
        self.x_mask.count_ones()
    }

    /// True iff every site carries at most one of X, Z (no Y factors), so the
    /// operator is self-adjoint whenever its phase is ±1.
    pub fn masks_disjoint(&self) -> bool {
        self.x_mask & self.z_mask == 0
    }
}
