use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use thetanormal::ranklab::{eval_matrix, numeric_rank, sample_points};
use thetanormal::theta::{basis_l_power, Scaled, Section, ThetaContext, ThetaSection};
use thetanormal::torus::{
    sample_tau, weil_exponent, weil_pairing, KGroupElement, PolarizationType, RiemannMatrix, TorsionPoint,
    TorusPoint,
};
use thetanormal::Result;

/// A section multiplied by a constant.
struct Times {
    inner: ThetaSection,
    factor: Complex64,
}

impl Section for Times {
    fn level(&self) -> u64 {
        self.inner.level()
    }
    fn ptype(&self) -> &PolarizationType {
        self.inner.ptype()
    }
    fn tau(&self) -> &RiemannMatrix {
        self.inner.tau()
    }
    fn eval_scaled(&self, z: &[Complex64], ctx: &ThetaContext) -> Result<Scaled> {
        let v = self.inner.eval_scaled(z, ctx)?;
        Ok(Scaled {
            mantissa: v.mantissa * self.factor,
            log_scale: v.log_scale,
        })
    }
    fn label(&self) -> String {
        self.inner.label()
    }
}

fn type_2_6() -> PolarizationType {
    PolarizationType::new(vec![2, 6]).unwrap()
}

fn k_elem() -> impl Strategy<Value = KGroupElement> {
    (0i64..2, 0i64..6, 0i64..2, 0i64..6)
        .prop_map(|(a0, a1, q0, q1)| KGroupElement::new(vec![a0, a1], vec![q0, q1], &type_2_6()))
}

proptest! {
    #[test]
    fn weil_pairing_is_alternating(x in k_elem(), y in k_elem()) {
        let t = type_2_6();
        prop_assert_eq!(weil_exponent(&x, &x, &t), 0);
        let e = t.exponent() as i64;
        prop_assert_eq!((weil_exponent(&x, &y, &t) + weil_exponent(&y, &x, &t)) % e, 0);
        let prod = weil_pairing(&x, &y, &t) * weil_pairing(&y, &x, &t);
        prop_assert!((prod - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn weil_pairing_is_bimultiplicative(x in k_elem(), y in k_elem(), w in k_elem()) {
        let t = type_2_6();
        let lhs = weil_pairing(&x.add(&y, &t), &w, &t);
        let rhs = weil_pairing(&x, &w, &t) * weil_pairing(&y, &w, &t);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn reduce_is_idempotent(p in prop::collection::vec(-50.0f64..50.0, 3), q in prop::collection::vec(-50.0f64..50.0, 3)) {
        let x = TorusPoint::new(p, q);
        let r = x.reduce();
        prop_assert_eq!(r.reduce(), r.clone());
        prop_assert!(r.p.iter().chain(&r.q).all(|&v| (0.0..1.0).contains(&v)));
        prop_assert!(x.coincides(&r, 1e-9));
    }

    #[test]
    fn torsion_group_laws(den in 1i64..12, a in prop::collection::vec(-30i64..30, 4), b in prop::collection::vec(-30i64..30, 4)) {
        let x = TorsionPoint::new(den, a[..2].to_vec(), a[2..].to_vec()).unwrap();
        let y = TorsionPoint::new(den, b[..2].to_vec(), b[2..].to_vec()).unwrap();
        prop_assert_eq!(x.add(&y), y.add(&x));
        prop_assert!(x.add(&x.neg()).is_zero());
        prop_assert_eq!(x.sub(&y).add(&y), x.clone());
        prop_assert_eq!(den % x.order(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rank_ignores_section_scaling(exps in prop::collection::vec(-6.0f64..6.0, 4), phases in prop::collection::vec(0.0f64..6.28, 4), seed in 0u64..50) {
        let t = PolarizationType::new(vec![4]).unwrap();
        let tau = Arc::new(sample_tau(1, seed, 1.0).unwrap());
        let basis = basis_l_power(&t, &tau, 1).unwrap();
        let pts = sample_points(1, 12, seed);
        let plain = numeric_rank(&eval_matrix(&basis, &pts, 1e-12).unwrap(), 1e-8).unwrap();
        let scaled: Vec<Times> = basis
            .iter()
            .zip(exps.iter().zip(&phases))
            .map(|(s, (&e, &ph))| Times { inner: s.clone(), factor: Complex64::from_polar(10f64.powf(e), ph) })
            .collect();
        let r = numeric_rank(&eval_matrix(&scaled, &pts, 1e-12).unwrap(), 1e-8).unwrap();
        prop_assert_eq!(plain.rank, r.rank);
        prop_assert_eq!(r.rank, 4);
    }

    #[test]
    fn rank_ignores_point_order(seed in 0u64..50, shift in 1usize..11) {
        let t = PolarizationType::new(vec![1, 2]).unwrap();
        let tau = Arc::new(sample_tau(2, seed, 1.0).unwrap());
        let basis = basis_l_power(&t, &tau, 2).unwrap();
        let mut pts = sample_points(2, 12, seed);
        let a = numeric_rank(&eval_matrix(&basis, &pts, 1e-12).unwrap(), 1e-8).unwrap();
        pts.rotate_left(shift);
        let b = numeric_rank(&eval_matrix(&basis, &pts, 1e-12).unwrap(), 1e-8).unwrap();
        prop_assert_eq!(a.rank, b.rank);
        prop_assert_eq!(a.rank, 8);
    }
}
