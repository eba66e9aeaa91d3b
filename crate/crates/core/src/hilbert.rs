//! Truncated state space `|dot, n_cav, n_ext>` with at most two quanta, the
//! ladder and transition operators acting on it, and the Jaynes-Cummings
//! coupling.
//!
//! Basis order is quanta-major, then dot (`G` before `X`), then cavity
//! occupation, then external occupation:
//!
//! ```text
//! 0 |G,0,0>   1 |G,0,1>   2 |G,1,0>   3 |X,0,0>
//! 4 |G,0,2>   5 |G,1,1>   6 |G,2,0>   7 |X,0,1>   8 |X,1,0>
//! ```
//!
//! `|G,0,2>` stands for "two or more photons emitted". Matrix elements whose
//! target state leaves the space are zero, so `sigma_plus` annihilates every
//! two-quantum state and the two-photon sector cannot be pumped further.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::linalg::{CMat, SparseMat, DIM};
use crate::report::fmt_f64;
use crate::scalar::Real;

/// Maximum total number of quanta kept in the basis.
pub const MAX_QUANTA: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dot {
    G,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub dot: Dot,
    pub n_cav: u8,
    pub n_ext: u8,
}

impl BasisState {
    pub const fn new(dot: Dot, n_cav: u8, n_ext: u8) -> Self {
        Self { dot, n_cav, n_ext }
    }

    pub fn quanta(&self) -> u8 {
        u8::from(self.dot == Dot::X) + self.n_cav + self.n_ext
    }

    /// States the system relaxes into once pumping stops: `|G,0,n>`.
    pub fn is_final(&self) -> bool {
        self.dot == Dot::G && self.n_cav == 0
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{:?},{},{}>", self.dot, self.n_cav, self.n_ext)
    }
}

/// The nine basis states and their positions.
#[derive(Clone, Debug)]
pub struct StateSpace {
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl StateSpace {
    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &BasisState) -> bool {
        self.index.contains_key(s)
    }

    pub fn state(&self, i: usize) -> BasisState {
        self.states[i]
    }

    /// Indices of states matching a predicate, in basis order.
    pub fn indices_where(&self, pred: impl Fn(&BasisState) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| pred(&self.states[i])).collect()
    }
}

pub fn build_space() -> StateSpace {
    let mut states = Vec::with_capacity(DIM);
    for q in 0..=MAX_QUANTA {
        for dot in [Dot::G, Dot::X] {
            for n_cav in 0..=MAX_QUANTA {
                for n_ext in 0..=MAX_QUANTA {
                    let s = BasisState::new(dot, n_cav, n_ext);
                    if s.quanta() == q {
                        states.push(s);
                    }
                }
            }
        }
    }
    debug_assert_eq!(states.len(), DIM);
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    StateSpace { states, index }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// Cavity annihilation `a`.
    A,
    /// Cavity creation `a^dagger`.
    ADag,
    /// External-mode creation `b^dagger`.
    BDag,
    /// `|G><X|`
    SigmaMinus,
    /// `|X><G|`
    SigmaPlus,
    /// `|X><X|`, the monitored observable.
    ProjX,
    /// Cavity-to-external leakage `a b^dagger`.
    ABDag,
    /// Dot-to-cavity emission `a^dagger sigma^-`.
    ADagSigmaMinus,
}

impl OperatorKind {
    /// Action on a single basis state in the untruncated space:
    /// `Some((amplitude, target))` or `None` when the state is annihilated.
    fn act(self, s: BasisState) -> Option<(f64, BasisState)> {
        let sqrt = |n: u8| f64::from(n).sqrt();
        match self {
            Self::A => (s.n_cav > 0).then(|| {
                (
                    sqrt(s.n_cav),
                    BasisState {
                        n_cav: s.n_cav - 1,
                        ..s
                    },
                )
            }),
            Self::ADag => Some((
                sqrt(s.n_cav + 1),
                BasisState {
                    n_cav: s.n_cav + 1,
                    ..s
                },
            )),
            Self::BDag => Some((
                sqrt(s.n_ext + 1),
                BasisState {
                    n_ext: s.n_ext + 1,
                    ..s
                },
            )),
            Self::SigmaMinus => (s.dot == Dot::X).then_some((1.0, BasisState { dot: Dot::G, ..s })),
            Self::SigmaPlus => (s.dot == Dot::G).then_some((1.0, BasisState { dot: Dot::X, ..s })),
            Self::ProjX => (s.dot == Dot::X).then_some((1.0, s)),
            Self::ABDag => Self::A
                .act(s)
                .and_then(|(a1, s1)| Self::BDag.act(s1).map(|(a2, s2)| (a1 * a2, s2))),
            Self::ADagSigmaMinus => Self::SigmaMinus
                .act(s)
                .and_then(|(a1, s1)| Self::ADag.act(s1).map(|(a2, s2)| (a1 * a2, s2))),
        }
    }
}

/// A matrix on the truncated space, kept in dense and sparse form.
#[derive(Clone, Debug)]
pub struct Operator<T: Real> {
    dense: CMat<T>,
    sparse: SparseMat<T>,
}

impl<T: Real> Operator<T> {
    pub fn from_dense(dense: CMat<T>) -> Self {
        let sparse = SparseMat::from_dense(&dense);
        Self { dense, sparse }
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.dense
    }

    pub fn sparse(&self) -> &SparseMat<T> {
        &self.sparse
    }

    pub fn dagger(&self) -> Self {
        Self::from_dense(self.dense.adjoint())
    }

    pub fn element(&self, row: usize, col: usize) -> Complex<T> {
        self.dense[(row, col)]
    }

    /// Applies the operator to a state vector.
    pub fn apply(&self, v: &[Complex<T>; DIM]) -> [Complex<T>; DIM] {
        let mut out = [Complex::zero(); DIM];
        for &(i, j, a) in self.sparse.entries() {
            out[i] += a * v[j];
        }
        out
    }

    /// Writes every matrix element as `row,col,re,im`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "re", "im"])?;
        for i in 0..DIM {
            for j in 0..DIM {
                let z = self.dense[(i, j)];
                wtr.write_record([
                    i.to_string(),
                    j.to_string(),
                    fmt_f64(z.re.to_f64_lossy()),
                    fmt_f64(z.im.to_f64_lossy()),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn make_operator<T: Real>(kind: OperatorKind, space: &StateSpace) -> Operator<T> {
    let mut m = CMat::zeros();
    for (col, s) in space.states().iter().enumerate() {
        if let Some((amp, target)) = kind.act(*s) {
            if let Some(row) = space.index_of(&target) {
                m[(row, col)] = Complex::new(T::lit(amp), T::zero());
            }
        }
    }
    Operator::from_dense(m)
}

/// `H = i g (a^dagger sigma^- - a sigma^+)` in units with hbar = 1.
///
/// The emission term is built by direct action on basis states and its
/// adjoint is taken afterwards, so `H` is exactly Hermitian even where the
/// product `a sigma^+` would pass through a truncated intermediate state.
pub fn hamiltonian<T: Real>(g: T, space: &StateSpace) -> Operator<T> {
    let emit = make_operator::<T>(OperatorKind::ADagSigmaMinus, space);
    let ig = Complex::new(T::zero(), g);
    let h = (*emit.matrix() - emit.matrix().adjoint()).scale_c(ig);
    Operator::from_dense(h)
}

/// Projector onto basis states satisfying `pred`.
pub fn projector<T: Real>(space: &StateSpace, pred: impl Fn(&BasisState) -> bool) -> Operator<T> {
    let mut m = CMat::zeros();
    for i in space.indices_where(pred) {
        m[(i, i)] = Complex::one();
    }
    Operator::from_dense(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Dot::{G, X};

    fn basis_vec(space: &StateSpace, s: BasisState) -> [Complex<f64>; DIM] {
        let mut v = [Complex::zero(); DIM];
        v[space.index_of(&s).unwrap()] = Complex::one();
        v
    }

    fn nonzero(v: &[Complex<f64>; DIM]) -> Vec<(usize, Complex<f64>)> {
        v.iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, z)| (i, *z))
            .collect()
    }

    #[test]
    fn space_has_the_nine_low_quanta_states() {
        let space = build_space();
        // brute force over dot x {0..2} x {0..2}
        let mut brute = 0;
        for dot in [G, X] {
            for c in 0..=2 {
                for e in 0..=2 {
                    let s = BasisState::new(dot, c, e);
                    if s.quanta() <= 2 {
                        brute += 1;
                        assert!(space.contains(&s), "{s} missing");
                    } else {
                        assert!(!space.contains(&s), "{s} should be truncated");
                    }
                }
            }
        }
        assert_eq!(brute, 9);
        assert_eq!(space.len(), 9);
        for s in [
            (G, 0, 0),
            (X, 0, 0),
            (G, 1, 0),
            (G, 0, 1),
            (X, 1, 0),
            (X, 0, 1),
            (G, 1, 1),
            (G, 2, 0),
            (G, 0, 2),
        ] {
            assert!(space.contains(&BasisState::new(s.0, s.1, s.2)));
        }
        assert!(!space.contains(&BasisState::new(X, 0, 2)));
    }

    #[test]
    fn enumeration_order_is_fixed() {
        let space = build_space();
        let expected = [
            (G, 0, 0),
            (G, 0, 1),
            (G, 1, 0),
            (X, 0, 0),
            (G, 0, 2),
            (G, 1, 1),
            (G, 2, 0),
            (X, 0, 1),
            (X, 1, 0),
        ];
        for (i, (d, c, e)) in expected.into_iter().enumerate() {
            assert_eq!(space.state(i), BasisState::new(d, c, e));
            assert_eq!(space.index_of(&BasisState::new(d, c, e)), Some(i));
        }
    }

    #[test]
    fn leakage_operator_elements() {
        let space = build_space();
        let op = make_operator::<f64>(OperatorKind::ABDag, &space);
        let out = op.apply(&basis_vec(&space, BasisState::new(G, 1, 0)));
        let idx = space.index_of(&BasisState::new(G, 0, 1)).unwrap();
        assert_eq!(nonzero(&out), vec![(idx, Complex::new(1.0, 0.0))]);

        let out = op.apply(&basis_vec(&space, BasisState::new(G, 2, 0)));
        let idx = space.index_of(&BasisState::new(G, 1, 1)).unwrap();
        assert_eq!(nonzero(&out), vec![(idx, Complex::new(2f64.sqrt(), 0.0))]);
    }

    #[test]
    fn pump_annihilates_two_photon_state() {
        let space = build_space();
        let op = make_operator::<f64>(OperatorKind::SigmaPlus, &space);
        let out = op.apply(&basis_vec(&space, BasisState::new(G, 0, 2)));
        assert!(nonzero(&out).is_empty());
    }

    #[test]
    fn hamiltonian_elements() {
        let space = build_space();
        let g = 0.1;
        let h = hamiltonian::<f64>(g, &space);
        let i = |d, c, e| space.index_of(&BasisState::new(d, c, e)).unwrap();
        assert_eq!(h.element(i(G, 1, 0), i(X, 0, 0)), Complex::new(0.0, g));
        assert_eq!(h.element(i(X, 0, 0), i(G, 1, 0)), Complex::new(0.0, -g));
        for k in 0..DIM {
            assert_eq!(h.element(k, k), Complex::zero());
        }

        // matrix-product oracle: i g (a^dagger)(sigma^-)
        let adag = make_operator::<f64>(OperatorKind::ADag, &space);
        let sm = make_operator::<f64>(OperatorKind::SigmaMinus, &space);
        let prod = adag.matrix().matmul(sm.matrix()).scale_c(Complex::new(0.0, g));
        let (r, c) = (i(G, 2, 0), i(X, 1, 0));
        assert!((h.element(r, c) - prod[(r, c)]).norm() < 1e-15);
        assert!((h.element(r, c) - Complex::new(0.0, g * 2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_quanta() {
        let space = build_space();
        let h = hamiltonian::<f64>(0.37, &space);
        assert_eq!(*h.matrix(), h.matrix().adjoint());
        let leak = make_operator::<f64>(OperatorKind::ABDag, &space);
        for (r, c, _) in h.sparse().entries().iter().chain(leak.sparse().entries()) {
            assert_eq!(space.state(*r).quanta(), space.state(*c).quanta());
        }
    }

    #[test]
    fn pump_raises_quanta_by_one() {
        let space = build_space();
        let sp = make_operator::<f64>(OperatorKind::SigmaPlus, &space);
        assert!(sp.sparse().nnz() > 0);
        for (r, c, _) in sp.sparse().entries() {
            assert_eq!(space.state(*r).quanta(), space.state(*c).quanta() + 1);
        }
    }

    #[test]
    fn sigma_minus_is_adjoint_of_sigma_plus() {
        let space = build_space();
        let sm = make_operator::<f64>(OperatorKind::SigmaMinus, &space);
        let sp = make_operator::<f64>(OperatorKind::SigmaPlus, &space);
        assert_eq!(*sm.matrix(), sp.matrix().adjoint());
    }

    #[test]
    fn projector_is_diagonal_idempotent() {
        let space = build_space();
        let p = make_operator::<f64>(OperatorKind::ProjX, &space);
        for (r, c, _) in p.sparse().entries() {
            assert_eq!(r, c);
        }
        assert_eq!(p.matrix().matmul(p.matrix()), *p.matrix());
    }

    #[test]
    fn csv_dump_has_all_elements() {
        let space = build_space();
        let h = hamiltonian::<f64>(0.1, &space);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "row,col,re,im");
        assert_eq!(lines.len(), 1 + DIM * DIM);
        // <G,1,0|H|X,0,0> sits at (2, 3)
        assert!(lines
            .iter()
            .any(|l| l.starts_with("2,3,") && l.ends_with("1.0000000000000001e-1")));
    }

    #[test]
    fn generic_over_f32() {
        let space = build_space();
        let h = hamiltonian::<f32>(0.1, &space);
        assert!(h.matrix().is_hermitian(0.0));
    }
}
