//! Finite weighted point measures on the real line.
//!
//! A [`PointMeasure`] is a finite sum of weighted Dirac masses. It carries the
//! profile of residual time credits: waiting customers sit at positive
//! locations, lost (or departed) customers at nonpositive ones. An atom located
//! exactly at `0.0` counts as nonpositive.

use crate::error::{invalid, Result};
use crate::RealFn;

/// A single weighted Dirac mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Finite point measure with atoms sorted by location.
///
/// Atoms sharing a location are kept apart (in insertion order) unless
/// [`PointMeasure::normalize`] is called.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointMeasure {
    atoms: Vec<Atom>,
}

impl PointMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a measure from `(location, weight)` pairs. Weights must be
    /// positive and finite, locations finite.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut out = Vec::new();
        for (location, weight) in atoms {
            if !location.is_finite() {
                return Err(invalid(format!("atom location {location} is not finite")));
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(invalid(format!("atom weight {weight} must be positive and finite")));
            }
            out.push(Atom { location, weight });
        }
        // stable: equal locations keep insertion order
        out.sort_by(|a, b| a.location.total_cmp(&b.location));
        Ok(Self { atoms: out })
    }

    /// Sum of unit Dirac masses at the given locations.
    pub fn unit_atoms(locations: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::new(locations.into_iter().map(|x| (x, 1.0)))
    }

    pub fn dirac(location: f64) -> Self {
        Self::unit_atoms([location]).expect("finite location")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `⟨ν, f⟩ = Σ wᵢ f(xᵢ)`, evaluated exactly.
    pub fn pair<F: RealFn + ?Sized>(&self, f: &F) -> f64 {
        self.atoms.iter().map(|a| a.weight * f.eval(a.location)).sum()
    }

    /// Moves every atom `h ≥ 0` to the left.
    pub fn translate_left(&self, h: f64) -> Result<Self> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(invalid(format!("translation {h} must be finite and nonnegative")));
        }
        Ok(Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { location: a.location - h, weight: a.weight })
                .collect(),
        })
    }

    /// Smallest strictly positive atom location, `t₁(ν)`.
    pub fn first_positive_atom(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.location).find(|&x| x > 0.0)
    }

    /// Mass on `(0, ∞)`.
    pub fn mass_positive(&self) -> f64 {
        self.atoms.iter().filter(|a| a.location > 0.0).map(|a| a.weight).sum()
    }

    /// Mass on `(-∞, 0]`.
    pub fn mass_nonpositive(&self) -> f64 {
        self.atoms.iter().filter(|a| a.location <= 0.0).map(|a| a.weight).sum()
    }

    /// Space-and-weight part of the fluid scaling: `(x, w) ↦ (x/n, w/n)`.
    pub fn renormalize(&self, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("renormalization index must be >= 1"));
        }
        let n = n as f64;
        Ok(Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { location: a.location / n, weight: a.weight / n })
                .collect(),
        })
    }

    /// Merges atoms sharing a location, preserving total mass.
    pub fn normalize(&self) -> Self {
        let mut atoms: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match atoms.last_mut() {
                Some(last) if last.location == a.location => last.weight += a.weight,
                _ => atoms.push(*a),
            }
        }
        Self { atoms }
    }

    /// Headerless `location,weight` rows.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for a in &self.atoms {
            out.push_str(&format!("{},{}\n", a.location, a.weight));
        }
        out
    }

    /// Inverse of [`PointMeasure::to_csv_rows`].
    pub fn from_csv_rows(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (x, w) = line
                .split_once(',')
                .ok_or_else(|| invalid(format!("malformed atom row {line:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("malformed number {s:?}: {e}")))
            };
            atoms.push((parse(x)?, parse(w)?));
        }
        Self::new(atoms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ind_pos(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn pairing_examples() {
        let nu = PointMeasure::new([(1.0, 2.0), (-0.5, 1.0)]).unwrap();
        assert_eq!(nu.pair(&|x: f64| x), 1.5);
        assert_eq!(PointMeasure::empty().pair(&|x: f64| x.sin() + 7.0), 0.0);
        assert_eq!(PointMeasure::dirac(3.0).pair(&ind_pos), 1.0);
    }

    #[test]
    fn translation_examples() {
        let nu = PointMeasure::dirac(3.0).translate_left(1.0).unwrap();
        assert_eq!(nu, PointMeasure::dirac(2.0));
        let nu = PointMeasure::unit_atoms([3.0, 5.0]).unwrap().translate_left(4.0).unwrap();
        assert_eq!(nu, PointMeasure::unit_atoms([-1.0, 1.0]).unwrap());
        let nu = PointMeasure::unit_atoms([0.3, -7.0]).unwrap();
        assert_eq!(nu.translate_left(0.0).unwrap(), nu);
        assert!(nu.translate_left(-1.0).is_err());
    }

    #[test]
    fn first_positive_atom_examples() {
        let nu = PointMeasure::unit_atoms([1.5, -2.0, 3.0]).unwrap();
        assert_eq!(nu.first_positive_atom(), Some(1.5));
        assert_eq!(PointMeasure::dirac(-1.0).first_positive_atom(), None);
        assert_eq!(PointMeasure::empty().first_positive_atom(), None);
        assert_eq!(PointMeasure::dirac(0.0).first_positive_atom(), None);
    }

    #[test]
    fn mass_split_examples() {
        let nu = PointMeasure::unit_atoms([1.0, -2.0]).unwrap();
        assert_eq!((nu.mass_positive(), nu.mass_nonpositive()), (1.0, 1.0));
        let nu = PointMeasure::dirac(0.0);
        assert_eq!((nu.mass_positive(), nu.mass_nonpositive()), (0.0, 1.0));
        let nu = PointMeasure::new([(2.0, 0.1), (5.0, 0.2)]).unwrap();
        assert!((nu.mass_positive() - 0.3).abs() < 1e-15);
        assert_eq!(nu.mass_nonpositive(), 0.0);
    }

    #[test]
    fn renormalize_examples() {
        let nu = PointMeasure::dirac(20.0).renormalize(10).unwrap();
        assert_eq!(nu, PointMeasure::new([(2.0, 0.1)]).unwrap());
        let nu = PointMeasure::unit_atoms([6.0, -3.0]).unwrap();
        assert_eq!(nu.renormalize(1).unwrap(), nu);
        assert!(nu.renormalize(0).is_err());

        // both sides evaluated directly
        let lhs = nu.renormalize(3).unwrap().pair(&ind_pos);
        let rhs = nu.pair(&|x: f64| ind_pos(x / 3.0)) / 3.0;
        assert!((lhs - 1.0 / 3.0).abs() < 1e-15);
        assert!((rhs - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_atoms() {
        assert!(PointMeasure::new([(1.0, 0.0)]).is_err());
        assert!(PointMeasure::new([(1.0, -1.0)]).is_err());
        assert!(PointMeasure::new([(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn ties_kept_apart_until_normalized() {
        let nu = PointMeasure::new([(1.0, 0.5), (1.0, 0.25), (-1.0, 1.0)]).unwrap();
        assert_eq!(nu.len(), 3);
        let merged = nu.normalize();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.total_mass(), nu.total_mass());
    }

    #[test]
    fn csv_fragment_round_trip() {
        let nu = PointMeasure::new([(1.25, 0.5), (-3.0, 2.0)]).unwrap();
        let text = nu.to_csv_rows();
        assert_eq!(text, "-3,2\n1.25,0.5\n");
        assert_eq!(PointMeasure::from_csv_rows(&text).unwrap(), nu);
    }

    fn arb_measure() -> impl Strategy<Value = PointMeasure> {
        prop::collection::vec((-50.0f64..50.0, 0.01f64..5.0), 0..20)
            .prop_map(|atoms| PointMeasure::new(atoms).unwrap())
    }

    proptest! {
        #[test]
        fn translation_is_a_semigroup(nu in arb_measure(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let twice = nu.translate_left(a).unwrap().translate_left(b).unwrap();
            let once = nu.translate_left(a + b).unwrap();
            for (x, y) in twice.atoms().iter().zip(once.atoms()) {
                prop_assert!((x.location - y.location).abs() <= 1e-12);
                prop_assert_eq!(x.weight, y.weight);
            }
        }

        #[test]
        fn translated_pairing_matches_shifted_function(nu in arb_measure(), h in 0.0f64..10.0) {
            let f = |x: f64| (0.3 * x).sin() + if x > 1.0 { 2.0 } else { 0.0 };
            let lhs = nu.translate_left(h).unwrap().pair(&f);
            let rhs = nu.pair(&|x: f64| f(x - h));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn positive_and_nonpositive_mass_partition(nu in arb_measure()) {
            let parts = nu.mass_positive() + nu.mass_nonpositive();
            prop_assert!((parts - nu.total_mass()).abs() <= 1e-12 * (1.0 + nu.total_mass()));
        }

        #[test]
        fn first_positive_atom_moves_with_translation(nu in arb_measure(), h in 0.0f64..10.0) {
            if let Some(x) = nu.first_positive_atom() {
                if x > h {
                    let moved = nu.translate_left(h).unwrap().first_positive_atom().unwrap();
                    prop_assert_eq!(moved, x - h);
                }
            }
        }

        #[test]
        fn renormalize_keeps_signs_and_scales_mass(nu in arb_measure(), n in 1u64..100) {
            let r = nu.renormalize(n).unwrap();
            for (a, b) in nu.atoms().iter().zip(r.atoms()) {
                prop_assert_eq!(a.location > 0.0, b.location > 0.0);
                prop_assert_eq!(a.location < 0.0, b.location < 0.0);
            }
            prop_assert!((r.total_mass() - nu.total_mass() / n as f64).abs() <= 1e-12);
        }
    }
}
