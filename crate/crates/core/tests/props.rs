//! Property tests for the numerical invariants: gauge determinism, padding
//! neutrality, energy partitions, tail-measure monotonicity and Lipschitz
//! bounds, mask-decomposition exactness, truncation bounds, and container
//! round trips.

use gsa_core::alignment::{decompose, pairwise_margins, AlignmentStructure, SupportSpec};
use gsa_core::block_energy::{block_energy, coarsen, AcceptedOverlap};
use gsa_core::matrix::{gauged_svd_default, square_embed, tail_energy, LayerMatrix};
use gsa_core::oracle::direct_coarse_block_energy;
use gsa_core::orbit::tail_mass;
use gsa_core::transport::{truncation_error, Interface, TruncationMode};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn layer_strategy(max_dim: usize) -> impl Strategy<Value = LayerMatrix> {
    (2..=max_dim, 2..=max_dim).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |entries| {
            LayerMatrix::from_rows(rows, cols, &entries, "prop").unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauge_is_deterministic(w in layer_strategy(7)) {
        let a = gauged_svd_default(&w).unwrap();
        let b = gauged_svd_default(&w).unwrap();
        prop_assert_eq!(a.left(), b.left());
        prop_assert_eq!(a.right(), b.right());
        prop_assert_eq!(a.singular_values(), b.singular_values());
    }

    #[test]
    fn gauge_reconstructs_and_is_orthonormal(w in layer_strategy(7)) {
        let svd = gauged_svd_default(&w).unwrap();
        prop_assert!(svd.orthogonality_defect() <= 1e-10);
        let fro = w.frobenius_norm();
        prop_assert!(svd.reconstruction_error(&w) <= 1e-8 * fro.max(1.0));
        // Nonincreasing up to in-cluster jitter.
        let sig = svd.singular_values();
        let tol = 1e-12 * sig.first().copied().unwrap_or(0.0);
        for pair in sig.windows(2) {
            prop_assert!(pair[1] <= pair[0] + tol);
        }
    }

    #[test]
    fn padding_preserves_norms_and_spectrum(w in layer_strategy(6)) {
        let e = square_embed(&w);
        prop_assert!((e.frobenius_norm() - w.frobenius_norm()).abs() <= 1e-12 * w.frobenius_norm().max(1.0));
        prop_assert!((e.operator_norm() - w.operator_norm()).abs() <= 1e-9 * w.operator_norm().max(1.0));
        let se = gauged_svd_default(&e).unwrap();
        let sw = gauged_svd_default(&w).unwrap();
        let r = sw.singular_values().len();
        for (a, b) in se.singular_values()[..r].iter().zip(sw.singular_values()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        for &z in &se.singular_values()[r..] {
            prop_assert!(z.abs() <= 1e-9 * sw.operator_norm().max(1.0));
        }
    }

    #[test]
    fn energy_partition(w in layer_strategy(7), r_frac in 0.0f64..1.0) {
        let svd = gauged_svd_default(&w).unwrap();
        let r = ((svd.spectral_len() as f64) * r_frac) as usize;
        let head: f64 = svd.singular_values()[..r].iter().map(|s| s * s).sum();
        let tail = tail_energy(&svd, r).unwrap();
        let total = w.frobenius_norm().powi(2);
        prop_assert!((head + tail - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn tail_mass_monotone_and_lipschitz(
        d in 4usize..128,
        a in 0.1f64..2.5,
        b in 0.1f64..2.5,
        r_frac in 0.0f64..1.0,
    ) {
        let r = ((d as f64) * r_frac) as usize;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tail_mass(d, hi, r) <= tail_mass(d, lo, r) + 1e-12);
        let lip = 2.0 * (d as f64).ln() * (a - b).abs();
        prop_assert!((tail_mass(d, a, r) - tail_mass(d, b, r)).abs() <= lip + 1e-12);
    }

    #[test]
    fn truncation_bound_dominates(
        w1 in layer_strategy(6),
        w2 in layer_strategy(6),
        fs in 0.0f64..1.0,
        ft in 0.0f64..1.0,
    ) {
        let ifc = Interface::new(&w1, &w2, 0).unwrap();
        let ds = ifc.source_svd().spectral_len();
        let dt = ifc.target_svd().spectral_len();
        prop_assume!(ds >= 1 && dt >= 1);
        let r_s = 1 + ((ds - 1) as f64 * fs) as usize;
        let r_t = 1 + ((dt - 1) as f64 * ft) as usize;
        let e = truncation_error(&ifc, r_s, r_t, TruncationMode::SourceMode).unwrap();
        prop_assert!(e.measured <= e.bound + 1e-9 * e.bound.max(1.0));
    }

    #[test]
    fn decomposition_is_exact_and_pythagorean(
        entries in proptest::collection::vec(-5.0f64..5.0, 48),
        s1 in 1usize..4,
        s2 in 1usize..4,
    ) {
        let m = DMatrix::from_row_slice(6, 8, &entries);
        let s = AlignmentStructure::extract(
            &m,
            vec![vec![4, 5], vec![0, 1], vec![2, 3]],
            &SupportSpec::Sizes(vec![s1, s2]),
            0.0,
            0.0,
        )
        .unwrap();
        let con = decompose(&m, &s);
        let resid = (&con.core + &con.overlap + &con.noise - &m).norm();
        prop_assert!(resid == 0.0);
        let total = m.norm_squared();
        let parts = con.core_norm.powi(2) + con.overlap_norm.powi(2) + con.noise_norm.powi(2);
        prop_assert!((total - parts).abs() <= 1e-9 * total.max(1.0));
        // Projection distance onto the core+overlap coordinate subspace is
        // exactly the noise norm: any masked competitor does no better.
        let competitor = &con.core * 0.5 + &con.overlap * 2.0;
        prop_assert!((&m - &competitor).norm() >= con.noise_norm - 1e-12);
    }

    #[test]
    fn one_third_equivalence_on_extracted_pairs(
        entries in proptest::collection::vec(-5.0f64..5.0, 48),
        s1 in 1usize..4,
        s2 in 1usize..4,
    ) {
        let m = DMatrix::from_row_slice(6, 8, &entries);
        let s = AlignmentStructure::extract(
            &m,
            vec![vec![], vec![0, 1, 2], vec![3, 4, 5]],
            &SupportSpec::Sizes(vec![s1, s2]),
            0.0,
            0.0,
        )
        .unwrap();
        let pw = pairwise_margins(&m, &s);
        for p in pw.nondegenerate() {
            prop_assert_eq!(p.one_third_holds, p.half_gap_holds);
            if let Some(frob) = p.frobenius_form_holds {
                prop_assert_eq!(p.one_third_holds, frob);
            }
        }
    }

    #[test]
    fn coarsening_formula_matches_direct(
        entries in proptest::collection::vec(-4.0f64..4.0, 36),
        merge_rows in proptest::bool::ANY,
        merge_cols in proptest::bool::ANY,
    ) {
        let a = DMatrix::from_row_slice(6, 6, &entries);
        let groups = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let bins = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        for g in &groups {
            let e: f64 = g.iter().map(|&r| a.row(r).norm_squared()).sum();
            prop_assume!(e > 1e-9);
        }
        let e = block_energy(&a, &groups, &bins);
        let pi_r = if merge_rows { vec![0, 0, 1] } else { vec![0, 1, 1] };
        let pi_c = if merge_cols { vec![0, 1, 1] } else { vec![0, 0, 1] };
        let res = coarsen(&e, &pi_r, &pi_c, 2, &bins, &AcceptedOverlap::diagonal_only(3)).unwrap();
        let direct = direct_coarse_block_energy(&a, &groups, &bins, &pi_r, &pi_c, 2);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((res.coarse_entries[i][j] - direct.entries[i][j]).abs() < 1e-12);
            }
        }
        prop_assert!(res.k2_holds && res.k3_holds);
    }

    #[test]
    fn container_roundtrip(w in layer_strategy(6)) {
        let dir = std::env::temp_dir().join(format!("gsa-prop-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prop.gsam");
        gsa_core::io::write_matrix(&path, &w).unwrap();
        let back = gsa_core::io::read_matrix(&path, "prop").unwrap();
        prop_assert_eq!(w.data(), back.data());
    }
}
