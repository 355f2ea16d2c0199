//! `gsa`: run the certificate toolkit over a chain of layer matrices.
//!
//! Subcommands mirror the measurement steps: spectral fits, rank windows,
//! transport construction, alignment extraction, block-energy heatmaps,
//! channel-anatomy labels, the full certification run, fine-tuning costs,
//! activation capacity, and a synthetic-chain generator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gsa_core::capacity::{activation_moments, scale_bounds, width_bounds, Activation};
use gsa_core::certificate::{
    analyze_chain, baseline_chain, emit_report, AlignedInterface, BaselineKind, ChainAnalysis,
    ProtocolConfig,
};
use gsa_core::error::GsaError;
use gsa_core::finetune::{frame_rotation_cost, project_post_frames, scale_disruption};
use gsa_core::io::{
    load_chain, read_config, to_canonical_json, write_config, write_csv, write_manifest,
    write_matrix, write_pgm, write_report, Manifest, ManifestEntry,
};
use gsa_core::matrix::gauged_svd_default;
use gsa_core::orbit::{model_rank_bounds, rank_margins};
use gsa_core::synth::{gen_power_law_chain, SynthChainSpec};

#[derive(Parser)]
#[command(name = "gsa", version, about = "Spectral-alignment certificates for layer weight chains")]
struct Cli {
    /// Chain manifest (JSON listing ordered GSAM containers).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Protocol config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "gsa-out")]
    out: PathBuf,
    /// Seed override for baseline generation and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Null-control baselines to run alongside `certify`.
    #[arg(long, global = true, value_enum)]
    baseline: Vec<BaselineArg>,
    /// External row-partition file (one group id per row, 0 = residual),
    /// used in place of the mode-profile rule.
    #[arg(long, global = true)]
    partition: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Gaussian,
    SpectrumPreserving,
    Permuted,
}

impl From<BaselineArg> for BaselineKind {
    fn from(value: BaselineArg) -> Self {
        match value {
            BaselineArg::Gaussian => BaselineKind::Gaussian,
            BaselineArg::SpectrumPreserving => BaselineKind::SpectrumPreserving,
            BaselineArg::Permuted => BaselineKind::Permuted,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-layer power-law coordinates and error measures.
    FitSpectra,
    /// Effective-rank windows, separation margins, and model bounds.
    RankWindow,
    /// Construct the configured transport matrix per interface.
    Transport,
    /// Extract alignment structures, pairwise margins, and radii.
    Align,
    /// Block-energy heatmaps, bad mass, and margin screens.
    BlockEnergy,
    /// Full certification: report, heatmaps, and baselines.
    Certify,
    /// Channel-anatomy (ICM) labels per interface.
    Icm,
    /// Scale-disruption and frame-rotation costs against a post chain.
    FinetuneCost(FinetuneArgs),
    /// Activation moments and the conditional scale/width bounds.
    Capacity(CapacityArgs),
    /// Generate a synthetic chain with manifest and config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FinetuneArgs {
    /// Manifest of the post-adaptation chain, matched layer by layer.
    #[arg(long)]
    post_manifest: PathBuf,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 64)]
    order: usize,
    /// Effective output rank for the width bounds.
    #[arg(long, default_value_t = 8.0)]
    r_out: f64,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Terminal amplification budget M.
    #[arg(long, default_value_t = 3.0)]
    budget: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    e0: f64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Comma-separated exponents, one per layer.
    #[arg(long, default_value = "1.0,1.002,1.0,0.999")]
    alphas: String,
    /// Zero all singular values beyond this rank.
    #[arg(long)]
    rank_cut: Option<usize>,
    /// Use identity singular frames (hand-checkable budgets).
    #[arg(long, default_value_t = false)]
    random_frames: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &GsaError) -> u8 {
    match err {
        GsaError::Container { .. } => 2,
        GsaError::Manifest { .. } | GsaError::Config { .. } => 3,
        GsaError::DimensionMismatch { .. } | GsaError::ShapeMismatch { .. } => 4,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<(), GsaError> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(cli, args),
        Command::Capacity(args) => cmd_capacity(cli, args),
        Command::FinetuneCost(args) => cmd_finetune(cli, args),
        Command::FitSpectra => cmd_fit_spectra(cli),
        Command::RankWindow => cmd_rank_window(cli),
        Command::Transport => cmd_transport(cli),
        Command::Align => cmd_align(cli),
        Command::BlockEnergy => cmd_block_energy(cli),
        Command::Icm => cmd_icm(cli),
        Command::Certify => cmd_certify(cli),
    }
}

fn load_protocol(cli: &Cli) -> Result<ProtocolConfig, GsaError> {
    let mut protocol = match &cli.config {
        Some(path) => read_config(path)?,
        None => ProtocolConfig::default(),
    };
    if let Some(seed) = cli.seed {
        protocol.seed = seed;
    }
    for b in &cli.baseline {
        let kind: BaselineKind = (*b).into();
        if !protocol.baselines.contains(&kind) {
            protocol.baselines.push(kind);
        }
    }
    if let Some(path) = &cli.partition {
        protocol.external_partition = Some(gsa_core::io::read_partition(path)?);
    }
    Ok(protocol)
}

fn require_manifest(cli: &Cli) -> Result<&PathBuf, GsaError> {
    cli.manifest.as_ref().ok_or_else(|| GsaError::Manifest {
        file: "<none>".to_string(),
        reason: "--manifest is required for this subcommand".to_string(),
    })
}

fn analyzed(cli: &Cli) -> Result<(ChainAnalysis, ProtocolConfig), GsaError> {
    let protocol = load_protocol(cli)?;
    let chain = load_chain(require_manifest(cli)?)?;
    let analysis = analyze_chain(&chain, &protocol)?;
    Ok((analysis, protocol))
}

fn write_json(path: &Path, value: &Value) -> Result<(), GsaError> {
    std::fs::write(path, to_canonical_json(value))?;
    Ok(())
}

fn opt(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<(), GsaError> {
    let alphas: Result<Vec<f64>, _> = args.alphas.split(',').map(|t| t.trim().parse()).collect();
    let alphas = alphas.map_err(|_| GsaError::Config {
        file: "--alphas".to_string(),
        reason: format!("cannot parse `{}` as comma-separated exponents", args.alphas),
    })?;
    let spec = SynthChainSpec {
        identity_frames: !args.random_frames,
        rank_cut: args.rank_cut,
        ..SynthChainSpec::new(args.d, alphas, cli.seed.unwrap_or(7))
    };
    let chain = gen_power_law_chain(&spec)?;
    let mut entries = Vec::with_capacity(chain.len());
    for (k, layer) in chain.iter().enumerate() {
        let file = format!("layer_{k:02}.gsam");
        write_matrix(&cli.out.join(&file), layer)?;
        entries.push(ManifestEntry {
            file,
            label: layer.label().to_string(),
            provenance: format!("synthetic power-law layer {k}"),
        });
    }
    write_manifest(&cli.out.join("chain.json"), &Manifest { matrices: entries })?;

    // A protocol under which the generated chain certifies cleanly.
    let mut protocol = load_protocol(cli)?;
    if cli.config.is_none() {
        protocol = ProtocolConfig {
            rank_rule: gsa_core::certificate::RankRule::Energy(if args.rank_cut.is_some() {
                0.02
            } else {
                0.5
            }),
            support_rule: gsa_core::certificate::SupportRule::EnergyFraction(0.5),
            theta_row: 1e-9,
            rho: 0.9,
            eps_noise: 1e-6,
            seed: spec.seed,
            baselines: protocol.baselines,
            ..ProtocolConfig::default()
        };
    }
    write_config(&cli.out.join("config.json"), &protocol)?;
    let spec_value = serde_json::to_value(&spec).expect("spec serializes");
    write_json(&cli.out.join("synth_spec.json"), &spec_value)?;
    println!(
        "wrote {} layers, chain.json, config.json to {}",
        chain.len(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_capacity(cli: &Cli, args: &CapacityArgs) -> Result<(), GsaError> {
    let activation = match args.activation.as_str() {
        "identity" => Activation::Identity,
        "relu" => Activation::Relu,
        "gelu" => Activation::Gelu,
        "tanh" => Activation::Tanh,
        "swish" => Activation::Swish,
        other => {
            return Err(GsaError::Config {
                file: "--activation".to_string(),
                reason: format!("unknown activation `{other}`"),
            })
        }
    };
    let moments = activation_moments(&activation, args.order)?;
    let scale = scale_bounds(args.e0, args.s, args.depth, args.budget, args.eta, &moments)?;
    let width = width_bounds(args.r_out, &moments)?;
    let value = json!({
        "activation": args.activation,
        "quadrature_order": args.order,
        "kappa": moments.kappa,
        "chi": moments.chi,
        "c_typical": scale.c_typical,
        "c_coherent": scale.c_coherent,
        "c_coherent_asymptotic": scale.c_coherent_asymptotic,
        "w_min_coherent": width.w_min_coherent,
        "w_min_typical": width.w_min_typical,
        "conditional_on": "capacity-accounting supply axioms (B1)-(B3)",
        "advisory": true,
    });
    write_json(&cli.out.join("capacity.json"), &value)?;
    println!("kappa = {:.6}, chi = {:.6}", moments.kappa, moments.chi);
    Ok(())
}

fn cmd_finetune(cli: &Cli, args: &FinetuneArgs) -> Result<(), GsaError> {
    let base = load_chain(require_manifest(cli)?)?;
    let post = load_chain(&args.post_manifest)?;
    if base.len() != post.len() {
        return Err(GsaError::DimensionMismatch {
            context: format!(
                "base chain has {} layers, post chain has {}",
                base.len(),
                post.len()
            ),
        });
    }
    let mut base_scales = Vec::new();
    let mut post_scales = Vec::new();
    let mut layer_records = Vec::new();
    for (w_base, w_post) in base.iter().zip(post.iter()) {
        let svd = gauged_svd_default(w_base)?;
        base_scales.push(svd.operator_norm());
        post_scales.push(w_post.operator_norm());
        let record = match project_post_frames(&svd, w_post) {
            Ok((q_u, q_v, sigma_post)) => {
                let cost = frame_rotation_cost(&svd, &q_u, &q_v, &sigma_post)?;
                json!({
                    "label": w_base.label(),
                    "delta_w": cost.delta_w,
                    "relative_rotation_norm": cost.relative_rotation_norm,
                    "relative_rotation_bound": cost.relative_rotation_bound,
                    "coherent_cost": cost.coherent_cost,
                    "uniform_scale": cost.uniform_scale,
                })
            }
            Err(GsaError::NonOrthogonalFrame { defect, .. }) => json!({
                "label": w_base.label(),
                "frame_recovery": "failed",
                "orthogonality_defect": defect,
            }),
            Err(e) => return Err(e),
        };
        layer_records.push(record);
    }
    let ratios: Vec<f64> = post_scales
        .iter()
        .zip(base_scales.iter())
        .map(|(p, b)| p / b)
        .collect();
    let disruption = scale_disruption(&ratios, &base_scales)?;
    let value = json!({
        "scale_ratios": ratios,
        "d_log": disruption.d_log,
        "d_ratio": disruption.d_ratio,
        "max_log_ratio": disruption.max_log_ratio,
        "envelope": disruption.envelope,
        "layers": layer_records,
    });
    write_json(&cli.out.join("finetune.json"), &value)?;
    println!("d_log = {:.6e}", disruption.d_log);
    Ok(())
}

fn cmd_fit_spectra(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, _) = analyzed(cli)?;
    let layers: Vec<Value> = analysis
        .layers
        .iter()
        .map(|l| {
            json!({
                "label": l.label,
                "d_sp": l.d_sp,
                "normalization_factor": l.normalization,
                "alpha": l.fit.alpha,
                "scale_c": l.fit.scale_c,
                "delta_pl": l.fit.delta_pl,
                "chart_error": l.fit.chart_error,
                "tail_error": l.fit.tail_error,
                "regression_residual": l.fit.regression_residual,
            })
        })
        .collect();
    for l in &analysis.layers {
        let m = nalgebra::DMatrix::from_row_slice(1, l.sigma.len(), &l.sigma);
        write_csv(&cli.out.join(format!("sigma_{}.csv", l.label)), &m)?;
    }
    write_json(&cli.out.join("fit_spectra.json"), &json!({ "layers": layers }))?;
    println!("fitted {} layers", analysis.layers.len());
    Ok(())
}

fn cmd_rank_window(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, protocol) = analyzed(cli)?;
    let eps = match protocol.rank_rule {
        gsa_core::certificate::RankRule::Energy(e) => e,
        gsa_core::certificate::RankRule::Fixed(_) => 0.5,
    };
    let layers: Vec<Value> = analysis
        .layers
        .iter()
        .map(|l| {
            let margins = rank_margins(l.d_sp, l.fit.alpha, eps).ok();
            let model = if l.fit.alpha > 0.5 {
                model_rank_bounds(l.d_sp, l.fit.alpha, eps).ok()
            } else {
                None
            };
            json!({
                "label": l.label,
                "rank": l.rank,
                "epsilon": eps,
                "margin": margins.as_ref().map(|m| m.margin),
                "tau_at_rank": margins.as_ref().map(|m| m.tau_at_rank),
                "model_lower": model.map(|(lo, _)| lo),
                "model_upper": model.map(|(_, hi)| hi),
                "rank_fraction": l.rank as f64 / l.d_sp as f64,
            })
        })
        .collect();
    let interfaces: Vec<Value> = analysis
        .interfaces
        .iter()
        .map(|i| {
            json!({
                "index": i.index,
                "rank_source": i.windows.0.rank,
                "rank_target": i.windows.1.rank,
                "ranks_agree": i.transfer.ranks_agree,
                "transfer_certified": i.transfer.certified,
                "transfer_lhs": i.transfer.lhs,
                "transfer_margin": i.transfer.margin,
            })
        })
        .collect();
    write_json(
        &cli.out.join("rank_window.json"),
        &json!({ "layers": layers, "interfaces": interfaces }),
    )?;
    println!("rank windows for {} layers", analysis.layers.len());
    Ok(())
}

fn iface_dir(out: &Path, index: usize) -> Result<PathBuf, GsaError> {
    let dir = out.join(format!("iface_{index:02}"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_transport(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, _) = analyzed(cli)?;
    for i in &analysis.interfaces {
        let dir = iface_dir(&cli.out, i.index)?;
        let al = i.aligned.as_ref().ok_or(GsaError::MissingAnalysis {
            index: i.index,
            what: "alignment",
        })?;
        write_csv(&dir.join("transport.csv"), &al.matrix)?;
        write_csv(&dir.join("transport_scale_free.csv"), &al.scale_free)?;
        let meta = json!({
            "index": i.index,
            "variant": i.variant.name(),
            "target_mode": format!("{:?}", i.target_mode),
            "row_coords": format!("{:?}", i.row_coords),
            "col_coords": format!("{:?}", i.col_coords),
            "rank_source": i.windows.0.rank,
            "rank_target": i.windows.1.rank,
            "trunc_bound": i.trunc.bound,
            "trunc_measured": i.trunc.measured,
        });
        write_json(&dir.join("transport_meta.json"), &meta)?;
    }
    println!("transports for {} interfaces", analysis.interfaces.len());
    Ok(())
}

fn align_summary(al: &AlignedInterface) -> Value {
    let pairs: Vec<Value> = al
        .margins
        .pairs
        .iter()
        .map(|p| {
            json!({
                "i": p.i,
                "j": p.j,
                "m": p.m,
                "o": p.o,
                "delta_sigma": p.delta_sigma,
                "gamma": p.gamma,
                "nondegenerate": p.nondegenerate,
                "one_third_holds": p.one_third_holds,
                "half_gap_holds": p.half_gap_holds,
                "slack": p.slack,
            })
        })
        .collect();
    let gaps: Vec<Value> = al.structure.gaps.iter().map(|&g| opt(g)).collect();
    json!({
        "groups": al.structure.num_groups(),
        "row_groups": al.structure.row_groups,
        "active_sets": al.structure.active_sets,
        "support_sizes": al.structure.support_sizes,
        "gaps": gaps,
        "row_perm": al.structure.row_perm,
        "col_perm": al.structure.col_perm,
        "pairs": pairs,
        "core_norm": al.core_norm,
        "overlap_norm": al.overlap_norm,
        "noise_norm": al.noise_norm,
        "r_cert": opt(al.radius.r_cert),
        "stability_certified": al.stability.certified,
        "alignment_residual_j": al.alignment_residual.j_value,
        "implied_c_overlap": al.alignment_residual.implied_c_overlap,
    })
}

fn cmd_align(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, _) = analyzed(cli)?;
    for i in &analysis.interfaces {
        let dir = iface_dir(&cli.out, i.index)?;
        let al = i.aligned.as_ref().ok_or(GsaError::MissingAnalysis {
            index: i.index,
            what: "alignment",
        })?;
        write_csv(&dir.join("permuted_m.csv"), &al.matrix)?;
        write_pgm(&dir.join("permuted_m.pgm"), &al.matrix)?;
        write_csv(&dir.join("permuted_ms.csv"), &al.scale_free)?;
        write_pgm(&dir.join("permuted_ms.pgm"), &al.scale_free)?;
        write_json(&dir.join("align.json"), &align_summary(al))?;
    }
    println!("alignment for {} interfaces", analysis.interfaces.len());
    Ok(())
}

fn block_energy_matrix(entries: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
    let k = entries.len();
    nalgebra::DMatrix::from_fn(k, k, |r, c| entries[r][c])
}

fn cmd_block_energy(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, _) = analyzed(cli)?;
    for i in &analysis.interfaces {
        let dir = iface_dir(&cli.out, i.index)?;
        let al = i.aligned.as_ref().ok_or(GsaError::MissingAnalysis {
            index: i.index,
            what: "alignment",
        })?;
        let er_m = block_energy_matrix(&al.block_energy.entries);
        let er_ms = block_energy_matrix(&al.block_energy_scale_free.entries);
        write_csv(&dir.join("er_m.csv"), &er_m)?;
        write_pgm(&dir.join("er_m.pgm"), &er_m)?;
        write_csv(&dir.join("er_ms.csv"), &er_ms)?;
        write_pgm(&dir.join("er_ms.pgm"), &er_ms)?;
        let screen = al.screen.as_ref().map(|s| {
            json!({
                "h_max": s.h_max,
                "slack": s.slack,
                "certified": s.certified,
            })
        });
        let value = json!({
            "row_energies": al.block_energy.row_energies,
            "off_mass": al.block_energy.off_mass,
            "diag_mass": al.block_energy.diag_mass,
            "zero_rows": al.block_energy.zero_rows,
            "bad_normalized": al.bad.normalized,
            "bad_unnormalized": al.bad.unnormalized,
            "visible_bad_energy": al.bad.visible_bad_energy,
            "screen": screen,
        });
        write_json(&dir.join("block_energy.json"), &value)?;
    }
    println!("block energies for {} interfaces", analysis.interfaces.len());
    Ok(())
}

fn cmd_icm(cli: &Cli) -> Result<(), GsaError> {
    let (analysis, _) = analyzed(cli)?;
    for i in &analysis.interfaces {
        let dir = iface_dir(&cli.out, i.index)?;
        let al = i.aligned.as_ref().ok_or(GsaError::MissingAnalysis {
            index: i.index,
            what: "alignment",
        })?;
        let groups: Vec<Value> = al
            .icm
            .groups
            .iter()
            .map(|g| {
                json!({
                    "group": g.group,
                    "sc": g.sc,
                    "st": g.st,
                    "sa": g.sa,
                    "srs": g.srs,
                    "gamma_sc": opt(g.gamma_sc),
                    "gamma_st": opt(g.gamma_st),
                    "gamma_sa": opt(g.gamma_sa),
                    "profile_gap": g.profile_gap,
                })
            })
            .collect();
        let value = json!({
            "groups": groups,
            "hubs": al.icm.hubs,
            "col_coords": format!("{:?}", al.icm.col_coords),
            "residual_rows": al.icm.noise.residual_rows,
            "noise_norm": al.icm.noise.noise_norm,
            // Reserved: a dual column-auxiliary set is not extracted.
            "column_auxiliary": Value::Null,
        });
        write_json(&dir.join("icm.json"), &value)?;
    }
    println!("channel anatomy for {} interfaces", analysis.interfaces.len());
    Ok(())
}

fn cmd_certify(cli: &Cli) -> Result<(), GsaError> {
    let protocol = load_protocol(cli)?;
    let chain = load_chain(require_manifest(cli)?)?;
    let analysis = analyze_chain(&chain, &protocol)?;

    let mut baselines = Vec::new();
    for kind in &protocol.baselines {
        let base = baseline_chain(&chain, *kind, protocol.seed)?;
        let base_analysis = analyze_chain(&base, &protocol)?;
        baselines.push((*kind, base_analysis));
    }

    let report = emit_report(&analysis, &baselines);
    write_report(&cli.out.join("report.json"), &report)?;

    for i in &analysis.interfaces {
        if let Some(al) = &i.aligned {
            let dir = iface_dir(&cli.out, i.index)?;
            write_pgm(&dir.join("permuted_m.pgm"), &al.matrix)?;
            write_pgm(&dir.join("permuted_ms.pgm"), &al.scale_free)?;
            write_csv(&dir.join("permuted_m.csv"), &al.matrix)?;
            write_csv(&dir.join("permuted_ms.csv"), &al.scale_free)?;
            let er_m = block_energy_matrix(&al.block_energy.entries);
            let er_ms = block_energy_matrix(&al.block_energy_scale_free.entries);
            write_pgm(&dir.join("er_m.pgm"), &er_m)?;
            write_pgm(&dir.join("er_ms.pgm"), &er_ms)?;
            write_csv(&dir.join("er_m.csv"), &er_m)?;
            write_csv(&dir.join("er_ms.csv"), &er_ms)?;
        }
    }

    println!(
        "certified {} interfaces: spectral={} compressibility={} physical={} full={} complete_margin={}",
        analysis.interfaces.len(),
        analysis.domain.spectral_holds,
        analysis.domain.compressibility_holds,
        analysis.domain.physical_holds,
        analysis.domain.full_holds,
        analysis.domain.complete_margin_holds,
    );
    for (kind, b) in &baselines {
        println!(
            "baseline {}: physical={} full={}",
            kind.name(),
            b.domain.physical_holds,
            b.domain.full_holds
        );
    }
    println!("report: {}", cli.out.join("report.json").display());
    Ok(())
}
