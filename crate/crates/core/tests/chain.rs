//! Cross-module checks on synthetic chains: the total-variation example,
//! the energy-window specialization of the truncation bound, and residual
//! accounting on a planted overlap violation.

use gsa_core::certificate::{analyze_chain, ProtocolConfig, RankRule, SupportRule};
use gsa_core::matrix::gauged_svd_default;
use gsa_core::orbit::{cartan_tv_bound, fit_power_law, interface_budget, ExponentInterval, FitRange};
use gsa_core::synth::{
    gen_power_law_chain, gen_structured_transport, SharedColumnSpec, SynthChainSpec,
    SynthStructureSpec,
};
use gsa_core::transport::{truncation_bound, Interface};

#[test]
fn tv_on_three_layer_chain_measures_step_sum() {
    // Exponents (1.0, 1.1, 1.0): total variation 0.2, within the budget
    // bound computed from the generated interfaces.
    let spec = SynthChainSpec {
        identity_frames: true,
        ..SynthChainSpec::new(64, vec![1.0, 1.1, 1.0], 11)
    };
    let chain = gen_power_law_chain(&spec).unwrap();
    let fits: Vec<_> = chain
        .iter()
        .map(|w| {
            let svd = gauged_svd_default(w).unwrap();
            fit_power_law(svd.spectral_values(), FitRange::full(svd.spectral_len())).unwrap()
        })
        .collect();
    let budgets: Vec<_> = (0..2)
        .map(|k| interface_budget(&chain[k], &chain[k + 1]).unwrap())
        .collect();
    let interval = ExponentInterval::new(0.9, 1.2).unwrap();
    let report = cartan_tv_bound(&fits, &budgets, 64, interval).unwrap();
    assert!((report.measured_tv - 0.2).abs() < 1e-8, "tv = {}", report.measured_tv);
    assert!(report.applicable);
    assert!(report.measured_tv <= report.exact_bound);
    assert!(report.measured_tv <= report.robust_bound);
}

#[test]
fn energy_window_truncation_bound_specializes() {
    // Trace-normalized layers with (1 - eps) energy windows obey
    // E_tr <= sqrt(eps d) (||W_{k+1}||_2 + ||W_k||_2).
    for seed in [3u64, 4, 5] {
        let spec = SynthChainSpec::new(48, vec![1.1, 1.25], seed);
        let chain = gen_power_law_chain(&spec).unwrap();
        let ifc = Interface::new(&chain[0], &chain[1], 0).unwrap();
        for eps in [0.5, 0.25, 0.1] {
            let r_s = ifc
                .window_from_energy(eps, gsa_core::matrix::WindowSide::Source)
                .unwrap()
                .rank;
            let r_t = ifc
                .window_from_energy(eps, gsa_core::matrix::WindowSide::Target)
                .unwrap()
                .rank;
            let bound = truncation_bound(&ifc, r_s, r_t).unwrap();
            let d = 48.0;
            let special = (eps * d).sqrt()
                * (ifc.target_svd().operator_norm() + ifc.source_svd().operator_norm());
            assert!(
                bound <= special + 1e-9,
                "eps {eps}: {bound} > {special}"
            );
        }
    }
}

#[test]
fn planted_violation_contributes_to_pair_residual() {
    // m = 1, o = 0.4 planted: the positive-part violation is 3*0.4 - 1.
    let spec = SynthStructureSpec {
        rows_per_group: vec![3, 3],
        residual_rows: 0,
        dedicated_cols: vec![2, 2],
        shared: vec![SharedColumnSpec {
            i: 0,
            j: 1,
            overlap: 0.4,
        }],
        extra_cols: 0,
        core_margin: 1.0,
        noise_norm: 0.0,
        seed: 21,
    };
    let planted = gen_structured_transport(&spec).unwrap();
    let p = planted.margins.pair(0, 1).unwrap();
    assert!((p.m - 1.0).abs() < 1e-12);
    assert!((p.o - 0.4).abs() < 1e-12);
    let violation: f64 = planted
        .margins
        .nondegenerate()
        .map(|p| (3.0 * p.o - p.m).max(0.0))
        .sum();
    assert!((violation - 0.2).abs() < 1e-12, "violation = {violation}");
}

#[test]
fn exact_constant_chain_has_zero_spec_and_pair_residual() {
    let spec = SynthChainSpec {
        identity_frames: true,
        rank_cut: Some(4),
        ..SynthChainSpec::new(24, vec![1.2, 1.2, 1.2], 2)
    };
    let chain = gen_power_law_chain(&spec).unwrap();
    let protocol = ProtocolConfig {
        rank_rule: RankRule::Energy(0.02),
        support_rule: SupportRule::EnergyFraction(0.5),
        theta_row: 1e-9,
        rho: 0.9,
        eps_noise: 1e-6,
        ..ProtocolConfig::default()
    };
    let analysis = analyze_chain(&chain, &protocol).unwrap();
    let residual = analysis.residual.unwrap();
    assert!(residual.d_spec < 1e-9);
    assert_eq!(residual.d_pair, 0.0);
    assert!(residual.bound_holds);
}

#[test]
fn global_sufficient_check_implies_pairwise_one_third() {
    // Whenever ||overlap||_F < m_*/3, every nondegenerate pair must pass.
    use gsa_core::alignment::decompose;
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
    let mut hits = 0usize;
    for _ in 0..2000 {
        let spec = SynthStructureSpec {
            rows_per_group: vec![rng.random_range(2..4usize), rng.random_range(2..4usize)],
            residual_rows: 1,
            dedicated_cols: vec![2, 2],
            shared: vec![SharedColumnSpec {
                i: 0,
                j: 1,
                overlap: rng.random_range(0.0..0.6),
            }],
            extra_cols: 1,
            core_margin: 1.0,
            noise_norm: rng.random_range(0.0..0.05),
            seed: rng.random(),
        };
        let planted = gen_structured_transport(&spec).unwrap();
        let con = decompose(&planted.matrix, &planted.structure);
        let m_star = planted.margins.m_star();
        if m_star.is_finite() && con.overlap_norm < m_star / 3.0 {
            assert!(
                planted.margins.all_one_third(),
                "global check held but a pair failed one-third"
            );
            hits += 1;
        }
    }
    assert!(hits > 200, "global-check branch under-exercised: {hits}");
}

#[test]
fn icm_extraction_is_deterministic() {
    use gsa_core::alignment::{decompose, icm_extract};
    use gsa_core::transport::ColCoords;
    let spec = SynthStructureSpec {
        rows_per_group: vec![3, 3],
        residual_rows: 1,
        dedicated_cols: vec![2, 2],
        shared: vec![SharedColumnSpec {
            i: 0,
            j: 1,
            overlap: 0.2,
        }],
        extra_cols: 1,
        core_margin: 1.0,
        noise_norm: 0.03,
        seed: 5,
    };
    let planted = gen_structured_transport(&spec).unwrap();
    let con = decompose(&planted.matrix, &planted.structure);
    let a = icm_extract(&con, &planted.structure, &[1, 1], 0.05, 0.5, ColCoords::SourceModes, Some(0.01)).unwrap();
    let b = icm_extract(&con, &planted.structure, &[1, 1], 0.05, 0.5, ColCoords::SourceModes, Some(0.01)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tiny_rho_fails_compressibility() {
    let spec = SynthChainSpec::new(32, vec![1.0, 1.05], 13);
    let chain = gen_power_law_chain(&spec).unwrap();
    // At alpha ~ 1 and eps = 0.05 the window needs ~8 of 32 modes, well
    // over ceil(0.01 * 32) = 1.
    let protocol = ProtocolConfig {
        rank_rule: RankRule::Energy(0.05),
        rho: 0.01,
        ..ProtocolConfig::default()
    };
    let analysis = analyze_chain(&chain, &protocol).unwrap();
    assert!(analysis.layers.iter().all(|l| l.rank > 1));
    assert!(!analysis.domain.compressibility_holds);
    assert!(!analysis.domain.full_holds);
}

#[test]
fn orthogonal_target_angular_overlap() {
    // W_k = I, W_{k+1} = Q orthogonal: the R x R angular overlap has all
    // singular values at most one (principal-angle cosines).
    use gsa_core::matrix::{LayerMatrix, RankWindow, WindowSide};
    use gsa_core::synth::seeded_orthogonal;
    use gsa_core::transport::{build_transport, TargetMode, TransportVariant};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let q = seeded_orthogonal(5, &mut rng);
    let id = LayerMatrix::from_matrix(nalgebra::DMatrix::identity(5, 5), "I").unwrap();
    let wq = LayerMatrix::from_matrix(q, "Q").unwrap();
    let ifc = Interface::new(&id, &wq, 0).unwrap();
    for r in 1..=4usize {
        let w = RankWindow {
            rank: r,
            energy_threshold: 0.5,
            side: WindowSide::Source,
        };
        let wt = RankWindow {
            rank: r,
            energy_threshold: 0.5,
            side: WindowSide::Target,
        };
        let t = build_transport(&ifc, TransportVariant::Ang, w, wt, TargetMode::Truncated)
            .unwrap();
        assert_eq!(t.entries.nrows(), r);
        assert_eq!(t.entries.ncols(), r);
        let top = t.entries.clone().singular_values().max();
        assert!(top <= 1.0 + 1e-12);
    }
}

#[test]
fn energy_window_pair_heatmap_within_budget() {
    // 25%- vs 50%-energy windows on a synthetic interface: the truncated
    // transports differ by at most the summed truncation budgets, and the
    // block-energy entries obey the perturbation lemma at that budget.
    use gsa_core::block_energy::window_robustness;
    let spec = SynthChainSpec::new(24, vec![1.1, 1.2], 31);
    let chain = gen_power_law_chain(&spec).unwrap();
    let ifc = Interface::new(&chain[0], &chain[1], 0).unwrap();
    let r25 = ifc
        .window_from_energy(0.25, gsa_core::matrix::WindowSide::Source)
        .unwrap()
        .rank;
    let r50 = ifc
        .window_from_energy(0.5, gsa_core::matrix::WindowSide::Source)
        .unwrap()
        .rank;
    let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
    let sets = vec![vec![0, 1], vec![2, 3]];
    let rep = window_robustness(&ifc, r50, r25.max(1), &groups, &sets, 1e-9).unwrap();
    assert!(rep.difference_holds);
    if let Some(h) = rep.heatmap {
        assert!(h.holds);
        // The lemma bound computed at the true distance is dominated by the
        // bound at the budget (monotone in delta).
        assert!(h.delta <= rep.delta_budget + 1e-9);
    }
}

#[test]
fn bridge_eps_window_bound_dominates_projection() {
    let spec = SynthChainSpec {
        identity_frames: true,
        rank_cut: Some(4),
        ..SynthChainSpec::new(24, vec![1.0, 1.001, 0.999], 17)
    };
    let chain = gen_power_law_chain(&spec).unwrap();
    let protocol = ProtocolConfig {
        rank_rule: RankRule::Energy(0.02),
        support_rule: SupportRule::EnergyFraction(0.5),
        theta_row: 1e-9,
        rho: 0.9,
        eps_noise: 1e-6,
        ..ProtocolConfig::default()
    };
    let analysis = analyze_chain(&chain, &protocol).unwrap();
    for i in &analysis.interfaces {
        let bound = i.bridge.eps_window_bound.expect("energy rule");
        assert!(
            i.bridge.projection_error <= bound + 1e-9,
            "projection {} > eps-window bound {}",
            i.bridge.projection_error,
            bound
        );
    }
}
