//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test -p cbc-core --test acceptance`; pass
//! criterion numbers after `--` to run a subset.

use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cbc_core::compress::{
    compress_model, compression_ratio, decomposed_adjoint, decomposed_forward, omp_select_basis, svd_factorize,
    CompressedModel, CompressionMethod, InitScheme,
};
use cbc_core::eval::{count_params, count_params_split, metrics_csv, run_benchmark, Candidate, EvalConfig};
use cbc_core::io::{Artifact, Container};
use cbc_core::model::{
    adjoint_apply, build_slice_kernels, dense_operator, forward_apply, lipschitz, slice_adjoint, slice_forward,
    DataCube, ImagingSetup, LinearOperator, ReflectivityMap, SliceConvModel, DEFAULT_DENSE_CAP_BYTES,
};
use cbc_core::parallel::Parallelism;
use cbc_core::solver::{
    build_network, default_lambda, gradient_check, ista_solve, network_predict, Arch, BlockOperator,
    NetworkInit, NetworkSource, NetworkSpec, OperatorParams, Trainability, UnrolledNet,
};
use cbc_core::train::{
    ablation_summary_csv, run_ablation, synthesize_indexed, train_network, AblationCell, AblationConfig,
    DataConfig, Snr, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn tiny_setup() -> ImagingSetup {
    ImagingSetup {
        num_elements: 3,
        grid_nz: 3,
        grid_nx: 3,
        grid_depth_origin: 0.2e-3,
        num_samples: 24,
        ..ImagingSetup::desk()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Direct physics matrix: entry `(t, r, s; pixel)` is the pulse sampled at
/// `t − τ(r, s, pixel)` for every ordered element pair.
fn physics_matrix(s: &ImagingSetup) -> Array2<f64> {
    let cube = DataCube::zeros(s.num_samples, s.num_elements);
    let mut a = Array2::zeros((s.num_data(), s.num_pixels()));
    for col in 0..s.grid_nx {
        for z in 0..s.grid_nz {
            let p = col * s.grid_nz + z;
            let (px, pz) = (s.pixel_x(col as isize), s.pixel_z(z));
            for r in 0..s.num_elements {
                for e in 0..s.num_elements {
                    let tau = s.round_trip_delay(r, e, px, pz);
                    for t in 0..s.num_samples {
                        a[[cube.index(t, r, e), p]] = s.pulse(s.sample_time(t) - tau);
                    }
                }
            }
        }
    }
    a
}

fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    a.dot(&ndarray::ArrayView1::from(x)).to_vec()
}

fn matvec_t(a: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    a.t().dot(&ndarray::ArrayView1::from(y)).to_vec()
}

fn c1_dense_oracle() -> Outcome {
    let setup = ImagingSetup::desk();
    let model = build_slice_kernels(&setup).unwrap();
    let dense = dense_operator(&model, DEFAULT_DENSE_CAP_BYTES).unwrap();
    let phys = physics_matrix(&setup);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut dev_lib, mut dev_phys) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = ReflectivityMap::from_vec(16, 16, gaussian(&mut rng, model.num_pixels())).unwrap();
        let y = DataCube::from_vec(64, 4, gaussian(&mut rng, model.num_data())).unwrap();
        let fx = forward_apply(&model, &x).unwrap().values;
        let aty = adjoint_apply(&model, &y).unwrap().values;
        dev_lib = dev_lib
            .max(max_abs_diff(&fx, &matvec(&dense, &x.values)))
            .max(max_abs_diff(&aty, &matvec_t(&dense, &y.values)));
        dev_phys = dev_phys
            .max(max_abs_diff(&fx, &matvec(&phys, &x.values)))
            .max(max_abs_diff(&aty, &matvec_t(&phys, &y.values)));
    }
    outcome(
        dev_lib < 1e-10 && dev_phys < 1e-10,
        format!("max |Δ| vs dense_operator {dev_lib:.2e}, vs direct physics matrix {dev_phys:.2e} (limit 1e-10)"),
    )
}

/// Worst `|⟨Ax, y⟩ − ⟨x, Aᵀy⟩| / max(|⟨Ax, y⟩|, |⟨x, Aᵀy⟩|)` over `pairs` draws.
fn adjoint_error(op: &dyn LinearOperator, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = gaussian(&mut rng, op.input_len());
        let y = gaussian(&mut rng, op.output_len());
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.apply_adjoint(&y).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    worst
}

fn analytic_spec(arch: Arch, blocks: usize, lambda: f64, l: f64) -> NetworkSpec {
    NetworkSpec {
        arch,
        num_blocks: blocks,
        init: NetworkInit::Analytic,
        lambda,
        lipschitz: l,
        trainable: Trainability::default(),
        shared: false,
        dense_cap_bytes: DEFAULT_DENSE_CAP_BYTES,
    }
}

/// Mlp blocks store `W2 = Aᵀ / L`; `L · W2` must be the adjoint of the model.
struct MlpAdjoint<'a> {
    model: &'a SliceConvModel,
    w2: &'a Array2<f64>,
    l: f64,
}

impl LinearOperator for MlpAdjoint<'_> {
    fn input_len(&self) -> usize {
        self.model.num_pixels()
    }
    fn output_len(&self) -> usize {
        self.model.num_data()
    }
    fn apply(&self, x: &[f64]) -> cbc_core::Result<Vec<f64>> {
        self.model.apply(x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> cbc_core::Result<Vec<f64>> {
        Ok(matvec(self.w2, y).into_iter().map(|v| v * self.l).collect())
    }
}

fn c2_adjoint_identity() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let comp = compress_model(&model, CompressionMethod::Omp, 16, 1e-6, 0).unwrap();
    let l = lipschitz(&model, 0).unwrap().value;
    let lc = lipschitz(&comp, 0).unwrap().value;
    let mut rows = vec![
        ("full", adjoint_error(&model, 50, 1)),
        ("decomposed", adjoint_error(&comp, 50, 2)),
    ];
    for (arch, source, lip) in [
        (Arch::Alista, NetworkSource::Model(&model), l),
        (Arch::Bc, NetworkSource::Model(&model), l),
        (Arch::Cbc, NetworkSource::Compressed(&comp), lc),
    ] {
        let net = build_network(&analytic_spec(arch, 3, 1.0, lip), source).unwrap();
        let mut worst = 0.0f64;
        for k in 0..net.num_blocks {
            worst = worst.max(adjoint_error(&BlockOperator::new(&net, k).unwrap(), 50, 10 + k as u64));
        }
        rows.push((arch_name(arch), worst));
    }
    let net = build_network(&analytic_spec(Arch::Mlp, 1, 1.0, l), NetworkSource::Model(&model)).unwrap();
    let OperatorParams::Dense { w2, .. } = net.block_operator(0) else {
        return outcome(false, "mlp block is not dense");
    };
    rows.push(("mlp", adjoint_error(&MlpAdjoint { model: &model, w2, l }, 50, 20)));
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let detail = rows
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(worst < 1e-12, format!("worst relative error over 50 pairs each: {detail}"))
}

fn arch_name(a: Arch) -> &'static str {
    match a {
        Arch::Mlp => "mlp",
        Arch::Alista => "alista",
        Arch::Bc => "bc",
        Arch::Cbc => "cbc",
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_vec((r, c), gaussian(rng, r * c)).unwrap()
}

/// `‖W − W_M‖_F` from the eigenvalues of `W Wᵀ`.
fn tail_norm(w: &Array2<f64>, m: usize) -> f64 {
    let (r, c) = w.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| w[[i, j]]);
    let mut ev: Vec<f64> = (&dm * dm.transpose()).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev[m..].iter().map(|v| v.max(0.0)).sum::<f64>().sqrt()
}

fn c3_factorization_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (c_out, k) = (12, 20);
    let mut monotone = true;
    let (mut svd_excess, mut tail_dev, mut ortho) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let w = random_matrix(&mut rng, c_out, k);
        let wn = frob(&w);
        for m in 1..=c_out {
            let (fo, ro) = omp_select_basis(&w, m, 0.0).unwrap();
            monotone &= ro.residual_history.windows(2).all(|p| p[1] <= p[0]);
            let (fs, rs) = svd_factorize(&w, m).unwrap();
            let e_omp = frob(&(&w - &fo.mixing.dot(&fo.basis)));
            let e_svd = frob(&(&w - &fs.mixing.dot(&fs.basis)));
            svd_excess = svd_excess.max(e_svd - e_omp);
            if m < c_out {
                tail_dev = tail_dev.max((e_svd - tail_norm(&w, m)).abs()).max((rs.final_error - e_svd).abs());
            }
            let resid = &w - &fo.mixing.dot(&fo.basis);
            ortho = ortho.max(frob(&resid.dot(&fo.basis.t())) / wn);
        }
    }
    let mut rank_err = 0.0f64;
    for r in [1, 3, 5] {
        let w = random_matrix(&mut rng, c_out, r).dot(&random_matrix(&mut rng, r, k));
        let (f, _) = svd_factorize(&w, r).unwrap();
        rank_err = rank_err.max(frob(&(&w - &f.mixing.dot(&f.basis))) / frob(&w));
    }
    let pass = monotone && svd_excess <= 1e-9 && tail_dev < 1e-9 && rank_err < 1e-9 && ortho < 1e-9;
    outcome(
        pass,
        format!(
            "OMP monotone {monotone}; max(err_svd − err_omp) {svd_excess:.1e}; |err_svd − eigen tail| {tail_dev:.1e}; \
             rank-r relative error {rank_err:.1e}; ‖R Bᵀ‖/‖W‖ {ortho:.1e}"
        ),
    )
}

fn c4_decomposition_exactness() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let comp = compress_model(&model, CompressionMethod::Omp, 16, 1e-6, 0).unwrap();
    let mut dev = 0.0f64;
    for fk in &comp.slices {
        let rk = fk.recomposed();
        for _ in 0..5 {
            let x = gaussian(&mut rng, model.num_pixels());
            dev = dev.max(max_abs_diff(
                decomposed_forward(fk, &x).unwrap().as_slice().unwrap(),
                slice_forward(&rk, &x).unwrap().as_slice().unwrap(),
            ));
            let y = random_matrix(&mut rng, fk.geometry.channels, fk.geometry.output_len);
            dev = dev.max(max_abs_diff(&decomposed_adjoint(fk, &y).unwrap(), &slice_adjoint(&rk, &y).unwrap()));
        }
    }
    let full = compress_model(&model, CompressionMethod::Omp, 64, 0.0, 0).unwrap();
    let mut full_dev = 0.0f64;
    for _ in 0..10 {
        let x = gaussian(&mut rng, model.num_pixels());
        full_dev = full_dev.max(max_abs_diff(&full.apply(&x).unwrap(), &model.apply(&x).unwrap()));
    }
    outcome(
        dev < 1e-10 && full_dev < 1e-9,
        format!("decomposed vs recomposed {dev:.2e} (limit 1e-10); OMP M=C_out vs full model {full_dev:.2e} (limit 1e-9)"),
    )
}

/// Plain ISTA on `op`, written out independently of the solver module.
fn reference_ista(op: &dyn LinearOperator, y: &[f64], lambda: f64, l: f64, iters: usize) -> Vec<f64> {
    let mut x = vec![0.0; op.input_len()];
    let theta = lambda / l;
    for _ in 0..iters {
        let r: Vec<f64> = op.apply(&x).unwrap().iter().zip(y).map(|(a, b)| a - b).collect();
        let g = op.apply_adjoint(&r).unwrap();
        for (xi, gi) in x.iter_mut().zip(&g) {
            let v = *xi - gi / l;
            *xi = v.signum() * (v.abs() - theta).max(0.0);
        }
    }
    x
}

fn c5_ista_unroll() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let comp = compress_model(&model, CompressionMethod::Omp, 16, 1e-6, 0).unwrap();
    let data = DataConfig {
        snr: Snr::Db(20.0),
        ..DataConfig::default()
    };
    let mut worst = 0.0f64;
    for i in 0..3 {
        let (_, y) = synthesize_indexed(&model, &data, 55, i).unwrap();
        for (arch, op, source) in [
            (Arch::Bc, &model as &dyn LinearOperator, NetworkSource::Model(&model)),
            (Arch::Cbc, &comp as &dyn LinearOperator, NetworkSource::Compressed(&comp)),
        ] {
            let l = lipschitz(op, 0).unwrap().value;
            let lam = default_lambda(op, &y.values).unwrap();
            let net = build_network(&analytic_spec(arch, 10, lam, l), source).unwrap();
            let est = network_predict(&net, &y).unwrap();
            let reference = reference_ista(op, &y.values, lam, l, 10);
            let lib = ista_solve(&y.values, op, lam, l, 10, -1.0).unwrap().x;
            let scale = max_abs(&reference).max(1e-300);
            worst = worst
                .max(max_abs_diff(&est, &reference) / scale)
                .max(max_abs_diff(&lib, &reference) / scale);
        }
    }
    let l = lipschitz(&model, 0).unwrap().value;
    let mut monotone = true;
    let mut worst_rise = 0.0f64;
    for i in 0..20 {
        let (_, y) = synthesize_indexed(&model, &data, 56, i).unwrap();
        let lam = default_lambda(&model, &y.values).unwrap();
        let res = ista_solve(&y.values, &model, lam, l, 500, -1.0).unwrap();
        monotone &= res.objective.len() == 501;
        for p in res.objective.windows(2) {
            let rise = (p[1] - p[0]) / p[0];
            worst_rise = worst_rise.max(rise);
            monotone &= rise <= 1e-12;
        }
    }
    outcome(
        worst < 1e-12 && monotone,
        format!(
            "10-block bc/cbc vs 10 ISTA iterations: max relative deviation {worst:.1e} (limit 1e-12); \
             500-iteration objective monotone on 20 instances: {monotone} (largest relative rise {worst_rise:.1e})"
        ),
    )
}

fn c6_gradients() -> Outcome {
    let setup = tiny_setup();
    let model = build_slice_kernels(&setup).unwrap();
    let comp = compress_model(&model, CompressionMethod::Svd, 4, 0.0, 0).unwrap();
    // Unit-scale instance: an absolute step h = 1e-6 needs O(1) weights and data.
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let x: Vec<f64> = (0..model.num_pixels()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut yv = model.apply(&x).unwrap();
    yv.iter_mut().for_each(|v| *v += 0.01 * rng.sample::<f64, _>(StandardNormal));
    let y = DataCube::from_vec(setup.num_samples, setup.num_elements, yv).unwrap();
    let l = lipschitz(&model, 0).unwrap().value;
    let lc = lipschitz(&comp, 0).unwrap().value;
    let lam = 0.5 * default_lambda(&model, &y.values).unwrap();
    let mut nets = Vec::new();
    for arch in [Arch::Mlp, Arch::Alista, Arch::Bc] {
        nets.push((arch_name(arch).to_string(), build_network(&analytic_spec(arch, 2, lam, l), NetworkSource::Model(&model)).unwrap()));
    }
    nets.push(("cbc".into(), build_network(&analytic_spec(Arch::Cbc, 2, lam, lc), NetworkSource::Compressed(&comp)).unwrap()));
    let mut random = analytic_spec(Arch::Cbc, 2, lam, lc);
    random.init = NetworkInit::Random {
        scheme: InitScheme::Xavier,
        seed: 6,
    };
    nets.push(("cbc/xavier".into(), build_network(&random, NetworkSource::Compressed(&comp)).unwrap()));
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, net) in &nets {
        let rep = gradient_check(net, &y, &x, 1e-6, 1e-5, 400, 7).unwrap();
        pass &= rep.passed && !rep.vacuous;
        parts.push(format!("{name} {:.1e} ({} checked)", rep.max_deviation, rep.checked));
    }
    outcome(pass, format!("N_s = {}, 2 blocks, h = 1e-6: {}", model.num_pixels(), parts.join(", ")))
}

/// First line of the results document starting with `prefix`.
fn table_line(prefix: &str) -> Option<String> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../paper.md");
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().find(|l| l.trim_start().starts_with(prefix)).map(str::to_string)
}

fn c7_counts() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let l = lipschitz(&model, 0).unwrap().value;
    let alista = build_network(&analytic_spec(Arch::Alista, 10, 1.0, l), NetworkSource::Model(&model)).unwrap();
    let alista_ok = count_params(&alista) == 10;
    let table_alista = table_line("ALISTA &").is_some_and(|s| s.contains("& $10$ &"));

    let mut ops = Vec::new();
    let mut exact_m = true;
    for m in [64, 32, 16] {
        let c = compress_model(&model, CompressionMethod::Svd, m, 0.0, 0).unwrap();
        exact_m &= c.slices.iter().all(|s| s.num_basis() == m);
        let mut spec = analytic_spec(Arch::Cbc, 10, 1.0, l);
        spec.shared = true;
        let net = build_network(&spec, NetworkSource::Compressed(&c)).unwrap();
        ops.push(count_params_split(&net).operator);
    }
    let ratio_ok = exact_m && ops[0] == 2 * ops[1] && ops[1] == 2 * ops[2];
    let table: Vec<f64> = ["BF-64", "BF-32", "BF-16"]
        .iter()
        .filter_map(|bf| table_line(&format!("C-BC-LISTA ({bf})")))
        .filter_map(|l| {
            let start = l.find("\\SI{")? + 4;
            l[start..].split('}').next()?.parse().ok()
        })
        .collect();
    let table_ratio = table.len() == 3 && (table[0] / table[2] - 4.0).abs() < 0.05 && (table[1] / table[2] - 2.0).abs() < 0.05;

    let desk_c = |m| compress_model(&model, CompressionMethod::Omp, m, 0.0, 0).unwrap();
    let tiny = build_slice_kernels(&tiny_setup()).unwrap();
    let configs: Vec<(CompressedModel, usize)> = vec![
        (desk_c(16), 0),
        (desk_c(32), 3),
        (compress_model(&tiny, CompressionMethod::Svd, 4, 0.0, 0).unwrap(), 1),
    ];
    let mut formula_ok = true;
    let mut shown = Vec::new();
    for (c, d) in &configs {
        let fk = &c.slices[*d];
        let (c_out, k, m) = (fk.geometry.channels, fk.geometry.kernel_len, fk.num_basis());
        let before = fk.recomposed().weights.len();
        let after = fk.basis.len() + fk.mixing.len();
        // before / after == (C_out·K) / (M·(K + C_out)) as exact rationals
        formula_ok &= before * (m * (k + c_out)) == (c_out * k) * after;
        formula_ok &= c.reports[*d].compression_ratio == compression_ratio(c_out, k, m);
        formula_ok &= compression_ratio(c_out, k, m) == (c_out * k) as f64 / (m * (k + c_out)) as f64;
        shown.push(format!("{c_out}x{k}@M={m}"));
    }
    outcome(
        alista_ok && table_alista && ratio_ok && table_ratio && formula_ok,
        format!(
            "ALISTA-10 trainable {} (table: 10 = {table_alista}); cbc operator params M=64/32/16: {}/{}/{} \
             (table {:?}M); ratio formula on {}: {formula_ok}",
            count_params(&alista),
            ops[0],
            ops[1],
            ops[2],
            table,
            shown.join(", ")
        ),
    )
}

fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 50,
        iters_per_epoch: 100,
        batch_size: 8,
        learning_rate: 1e-2,
        threshold_learning_rate: Some(5.0),
        lr_decay: 0.93,
        early_stopping: false,
        seed,
        record_timing: false,
        data: DataConfig {
            snr: Snr::Db(20.0),
            ..DataConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn c8_desk_training() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let comp = compress_model(&model, CompressionMethod::Omp, 16, 1e-6, 0).unwrap();
    let l_full = lipschitz(&model, 0).unwrap().value;
    let lc = lipschitz(&comp, 0).unwrap().value;
    let eval = EvalConfig {
        set_size: 128,
        conditions: vec![Snr::Db(20.0)],
        seed: 1000,
        ..EvalConfig::default()
    };
    let ista = [Candidate::Ista {
        id: "ISTA-200".into(),
        op: &model,
        iterations: 200,
        lambda: None,
        lipschitz: l_full,
    }];
    let ista_mse = run_benchmark(&model, &ista, &eval, Parallelism::default()).unwrap()[0].mse_mean;
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let cfg = desk_train_config(seed);
        let val = cbc_core::train::validation_set(&model, &cfg).unwrap();
        let lam = cbc_core::train::calibrate_lambda(&model, &val).unwrap();
        let mut spec = analytic_spec(Arch::Cbc, 10, lam, lc);
        spec.shared = true;
        let net = build_network(&spec, NetworkSource::Compressed(&comp)).unwrap();
        let out = train_network(&net, &model, &cfg, Parallelism::default()).unwrap();
        let cand = [Candidate::Network {
            id: "cbc".into(),
            net: &out.net,
        }];
        let mse = run_benchmark(&model, &cand, &eval, Parallelism::default()).unwrap()[0].mse_mean;
        wins += usize::from(mse < ista_mse);
        parts.push(format!("seed {seed}: {mse:.4e} ({} epochs)", out.record.epochs.len()));
    }
    outcome(
        wins >= 2,
        format!("ISTA-200 eval MSE {ista_mse:.4e}; C-BC BF-16 {}; wins {wins}/3", parts.join(", ")),
    )
}

fn c9_ablation() -> Outcome {
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let cell = |blocks, init: &str| AblationCell {
        blocks,
        init: init.into(),
        forward_frozen: false,
    };
    let (mut init_wins, mut depth_wins) = (0, 0);
    let mut parts = Vec::new();
    for seed in 0..3 {
        let cfg = AblationConfig {
            arch: Arch::Cbc,
            basis: 16,
            shared: true,
            cells: vec![cell(10, "omp"), cell(10, "xavier"), cell(5, "omp"), cell(20, "omp")],
            train: TrainConfig {
                max_epochs: 10,
                iters_per_epoch: 50,
                ..desk_train_config(seed)
            },
            ..AblationConfig::default()
        };
        let res = run_ablation(&model, &cfg, Parallelism::default()).unwrap();
        let v: Vec<f64> = res.iter().map(|r| r.final_val_loss()).collect();
        init_wins += usize::from(v[0] < v[1]);
        depth_wins += usize::from(v[3] <= v[2]);
        parts.push(format!("seed {seed}: omp {:.3e} xavier {:.3e} K5 {:.3e} K20 {:.3e}", v[0], v[1], v[2], v[3]));
    }
    outcome(
        init_wins >= 2 && depth_wins >= 2,
        format!("10 epochs each; OMP < Xavier {init_wins}/3, K20 ≤ K5 {depth_wins}/3; {}", parts.join("; ")),
    )
}

fn roundtrip(a: &Artifact, tmp: &std::path::Path) -> bool {
    let bytes = a.to_bytes().unwrap();
    let back = Artifact::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
    let path = tmp.join(format!("{}.cbc", a.kind()));
    a.save(&path).unwrap();
    let from_disk = std::fs::read(&path).unwrap();
    let reloaded = Artifact::load(&path).unwrap();
    let same = match (a, &back) {
        (Artifact::Network(x), Artifact::Network(y)) => x == y,
        (Artifact::Model(x), Artifact::Model(y)) => x == y,
        (Artifact::Compressed(x), Artifact::Compressed(y)) => x == y,
        (Artifact::Cube(x), Artifact::Cube(y)) => x == y,
        (Artifact::Reflectivity(x), Artifact::Reflectivity(y)) => x == y,
        _ => false,
    };
    same && back.to_bytes().unwrap() == bytes && from_disk == bytes && reloaded.to_bytes().unwrap() == bytes
}

fn c10_determinism() -> Outcome {
    let tmp = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&tmp).unwrap();
    let model = build_slice_kernels(&ImagingSetup::desk()).unwrap();
    let comp = compress_model(&model, CompressionMethod::Omp, 16, 1e-6, 0).unwrap();
    let l = lipschitz(&model, 0).unwrap().value;
    let (x, y) = synthesize_indexed(&model, &DataConfig::default(), 9, 0).unwrap();
    let mut arts = vec![
        Artifact::Model(model.clone()),
        Artifact::Compressed(comp.clone()),
        Artifact::Cube(y),
        Artifact::Reflectivity(x),
    ];
    let mut nets: Vec<UnrolledNet> = vec![
        build_network(&analytic_spec(Arch::Mlp, 2, 1.0, l), NetworkSource::Model(&model)).unwrap(),
        build_network(&analytic_spec(Arch::Alista, 3, 1.0, l), NetworkSource::Model(&model)).unwrap(),
        build_network(&analytic_spec(Arch::Bc, 3, 1.0, l), NetworkSource::Model(&model)).unwrap(),
        build_network(&analytic_spec(Arch::Cbc, 3, 1.0, l), NetworkSource::Compressed(&comp)).unwrap(),
    ];
    let mut random = analytic_spec(Arch::Cbc, 2, 1.0, l);
    random.init = NetworkInit::Random {
        scheme: InitScheme::Orthogonal,
        seed: 4,
    };
    nets.push(build_network(&random, NetworkSource::Compressed(&comp)).unwrap());
    let mut ok_art = 0;
    let n_art = arts.len() + nets.len();
    for (i, net) in nets.into_iter().enumerate() {
        let dir = tmp.join(format!("net{i}"));
        std::fs::create_dir_all(&dir).unwrap();
        ok_art += usize::from(roundtrip(&Artifact::Network(Box::new(net)), &dir));
    }
    for a in arts.drain(..) {
        ok_art += usize::from(roundtrip(&a, &tmp));
    }

    let tiny = build_slice_kernels(&tiny_setup()).unwrap();
    let small = DataConfig {
        min_scatterers: 1,
        max_scatterers: 3,
        snr: Snr::Db(20.0),
        ..DataConfig::default()
    };
    let tcfg = TrainConfig {
        max_epochs: 3,
        iters_per_epoch: 5,
        batch_size: 4,
        validation_set_size: 8,
        learning_rate: 1e-3,
        record_timing: false,
        seed: 12,
        data: small.clone(),
        ..TrainConfig::default()
    };
    let tl = lipschitz(&tiny, 0).unwrap().value;
    let tnet = build_network(&analytic_spec(Arch::Bc, 2, 1.0, tl), NetworkSource::Model(&tiny)).unwrap();
    let run_train = |mode| {
        let o = train_network(&tnet, &tiny, &tcfg, mode).unwrap();
        (o.record.to_csv(), Artifact::Network(Box::new(o.net)).to_bytes().unwrap())
    };
    let t1 = run_train(Parallelism::default());
    let t2 = run_train(Parallelism::default());
    let t3 = run_train(Parallelism::Sequential);
    let ecfg = EvalConfig {
        set_size: 8,
        data: small.clone(),
        seed: 5,
        ..EvalConfig::default()
    };
    let run_eval = || {
        let cands = [
            Candidate::Network { id: "bc".into(), net: &tnet },
            Candidate::Ista {
                id: "ISTA-20".into(),
                op: &tiny,
                iterations: 20,
                lambda: None,
                lipschitz: tl,
            },
        ];
        metrics_csv(&run_benchmark(&tiny, &cands, &ecfg, Parallelism::default()).unwrap())
    };
    let acfg = AblationConfig {
        basis: 4,
        blocks: vec![1, 2],
        inits: vec!["svd".into(), "xavier".into()],
        train: TrainConfig {
            max_epochs: 2,
            ..tcfg.clone()
        },
        ..AblationConfig::default()
    };
    let run_abl = || ablation_summary_csv(&run_ablation(&tiny, &acfg, Parallelism::default()).unwrap());
    let csv_ok = t1 == t2 && t1 == t3 && run_eval() == run_eval() && run_abl() == run_abl();
    outcome(
        ok_art == n_art && csv_ok,
        format!(
            "{ok_art}/{n_art} artifacts round-trip byte-exactly (memory and disk); \
             repeated train/metrics/ablation CSVs identical (incl. sequential vs parallel training): {csv_ok}"
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "dense-oracle equivalence", c1_dense_oracle),
    (2, "adjoint identity", c2_adjoint_identity),
    (3, "factorization suite", c3_factorization_suite),
    (4, "decomposition exactness", c4_decomposition_exactness),
    (5, "ISTA/unroll equivalence", c5_ista_unroll),
    (6, "gradient correctness", c6_gradients),
    (7, "parameter counts", c7_counts),
    (8, "desk training vs ISTA-200", c8_desk_training),
    (9, "desk ablation", c9_ablation),
    (10, "determinism and persistence", c10_determinism),
];

/// Wall-clock limits in seconds where one is stated.
fn time_limit(n: usize) -> Option<f64> {
    match n {
        1 => Some(10.0),
        3 => Some(30.0),
        6 => Some(60.0),
        8 => Some(1800.0),
        _ => None,
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut o = f();
        let secs = start.elapsed().as_secs_f64();
        if let Some(limit) = time_limit(n) {
            if secs >= limit {
                o.pass = false;
                o.detail.push_str(&format!("; runtime {secs:.1}s exceeds {limit}s"));
            }
        }
        println!(
            "criterion {n:>2} [{}] {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
