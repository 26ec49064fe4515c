use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use hk_core::{
    gaussian_eval, sigma0, DoublePhasePoint, GaussianWavepacket, Observable, PhaseSpacePoint,
    Potential, SimConfig, WidthMatrix,
};

fn packet(q: Vec<f64>, p: Vec<f64>, width: WidthMatrix, eps: f64) -> GaussianWavepacket {
    let d = q.len();
    GaussianWavepacket::new(
        PhaseSpacePoint::new(q, p).unwrap(),
        width,
        SimConfig::new(d, eps).unwrap(),
    )
    .unwrap()
}

fn spd_2x2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    // LLᵀ with L = [[a, 0], [b, c]], a, c > 0
    DMatrix::from_row_slice(2, 2, &[a * a, a * b, a * b, b * b + c * c])
}

#[test]
fn wavepacket_is_normalized_in_one_dimension() {
    for (q, p, gamma, eps) in [(0.3, -1.2, 1.0, 1.0), (-2.0, 0.5, 0.4, 0.05), (1.0, 3.0, 2.5, 0.3)] {
        let g = packet(vec![q], vec![p], WidthMatrix::diagonal(vec![gamma]).unwrap(), eps);
        let sd = (eps / gamma).sqrt();
        let n = 4000;
        let h = 24.0 * sd / n as f64;
        let norm: f64 = (0..=n)
            .map(|i| gaussian_eval(&g, &[q - 12.0 * sd + i as f64 * h]).unwrap().norm_sqr())
            .sum::<f64>()
            * h;
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
    }
}

#[test]
fn wavepacket_with_full_width_is_normalized() {
    let width = WidthMatrix::full(spd_2x2(1.2, 0.4, 0.8)).unwrap();
    let g = packet(vec![0.5, -0.3], vec![1.0, 0.2], width, 0.5);
    let n = 300;
    let h = 12.0 / n as f64;
    let mut norm = 0.0;
    for i in 0..=n {
        for k in 0..=n {
            let x = [0.5 - 6.0 + i as f64 * h, -0.3 - 6.0 + k as f64 * h];
            norm += gaussian_eval(&g, &x).unwrap().norm_sqr();
        }
    }
    assert_relative_eq!(norm * h * h, 1.0, max_relative = 1e-10);
}

#[test]
fn sigma0_inverts_blockwise() {
    let width = WidthMatrix::full(spd_2x2(1.5, -0.6, 0.9)).unwrap();
    let s = sigma0(&width);
    let mut other = DMatrix::zeros(4, 4);
    other.view_mut((0, 0), (2, 2)).copy_from(width.inverse());
    other.view_mut((2, 2), (2, 2)).copy_from(width.matrix());
    let prod = s * other;
    assert!((prod - DMatrix::<f64>::identity(4, 4)).amax() < 1e-13);
}

#[test]
fn width_matrix_rejects_invalid_input() {
    assert!(WidthMatrix::diagonal(vec![]).is_err());
    assert!(WidthMatrix::diagonal(vec![1.0, 0.0]).is_err());
    assert!(WidthMatrix::diagonal(vec![f64::NAN]).is_err());
    assert!(WidthMatrix::full(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).is_err());
    assert!(WidthMatrix::full(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
}

#[test]
fn full_width_matrix_detects_diagonal_input() {
    let w = WidthMatrix::full(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
    assert!(w.is_diagonal());
    assert!(!w.is_identity());
    assert_relative_eq!(w.det(), 1.0, max_relative = 1e-15);
    assert!(WidthMatrix::identity(3).is_identity());
}

#[test]
fn points_reject_mismatch_and_non_finite() {
    assert!(PhaseSpacePoint::new(vec![0.0; 2], vec![0.0; 3]).is_err());
    assert!(PhaseSpacePoint::new(vec![f64::INFINITY], vec![0.0]).is_err());
    let y = PhaseSpacePoint::zeros(2);
    let z = PhaseSpacePoint::zeros(3);
    assert!(DoublePhasePoint::new(y, z).is_err());
}

#[test]
fn wavepacket_checks_dimensions() {
    let cfg = SimConfig::new(2, 1.0).unwrap();
    let err = GaussianWavepacket::new(PhaseSpacePoint::zeros(2), WidthMatrix::identity(3), cfg);
    assert!(err.is_err());
}

#[test]
fn observable_indices_are_validated_against_the_dimension() {
    assert!(Observable::Position(2).validate(2).is_err());
    assert!(Observable::MomentumSq(1).validate(2).is_ok());
    assert!(Observable::potential(Potential::HenonHeiles { sigma: -1.0 }).validate(2).is_err());
}

proptest! {
    #[test]
    fn flat_layout_round_trips(v in prop::collection::vec(-1e3f64..1e3, 1..6usize)) {
        let d = v.len();
        let mut flat = v.clone();
        flat.extend(v.iter().map(|x| -x));
        let z = PhaseSpacePoint::from_slice(&flat);
        prop_assert_eq!(z.to_vec(), flat.clone());
        let mut double = flat.clone();
        double.extend(flat.iter().map(|x| 2.0 * x));
        let w = DoublePhasePoint::from_slice(&double);
        prop_assert_eq!(w.dim(), d);
        prop_assert_eq!(w.to_vec(), double);
    }

    #[test]
    fn quadratic_forms_match_dense_products(
        a in 0.2f64..3.0, b in -2.0f64..2.0, c in 0.2f64..3.0,
        u in prop::array::uniform2(-5.0f64..5.0),
        v in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let m = spd_2x2(a, b, c);
        let w = WidthMatrix::full(m.clone()).unwrap();
        let uv = nalgebra::DVector::from_column_slice(&u);
        let vv = nalgebra::DVector::from_column_slice(&v);
        let inv = m.clone().try_inverse().unwrap();
        let scale = 1.0 + uv.norm() * vv.norm() * (m.amax() + inv.amax());
        prop_assert!((w.quad(&u) - (uv.transpose() * &m * &uv)[0]).abs() < 1e-10 * scale);
        prop_assert!((w.inv_quad(&u) - (uv.transpose() * &inv * &uv)[0]).abs() < 1e-10 * scale);
        prop_assert!((w.inv_bilinear(&u, &v) - (uv.transpose() * &inv * &vv)[0]).abs() < 1e-10 * scale);
        let mut out = [0.0; 2];
        w.mul_into(&u, &mut out);
        let dense = &m * &uv;
        prop_assert!((out[0] - dense[0]).abs() + (out[1] - dense[1]).abs() < 1e-10 * scale);
        w.inv_mul_into(&u, &mut out);
        let dense = &inv * &uv;
        prop_assert!((out[0] - dense[0]).abs() + (out[1] - dense[1]).abs() < 1e-10 * scale);
    }

    #[test]
    fn observable_labels_round_trip(j in 0usize..12, kind in 0usize..4) {
        let pot = Potential::HenonHeiles { sigma: 0.2 };
        let obs = match kind {
            0 => Observable::Position(j),
            1 => Observable::PositionSq(j),
            2 => Observable::Momentum(j),
            _ => Observable::MomentumSq(j),
        };
        prop_assert_eq!(Observable::parse(&obs.to_string(), pot).unwrap(), obs);
    }

    #[test]
    fn observable_parse_never_panics(label in "\\PC{0,6}") {
        let _ = Observable::parse(&label, Potential::Harmonic);
    }
}
