use lrformer_bench::{
    analytic_cost, curve_csv, emit_curve, environment, gfca_forward, measure, memory_ratio,
    score_elements, vanilla_forward, CSV_HEADER, DEFAULT_GRID,
};
use lrformer_core::gfca::{
    adaptive_mixup, branch_attention, from_frequency_tokens, to_frequency_tokens,
};
use lrformer_core::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_examples() {
    let r = analytic_cost(1024).unwrap();
    assert_eq!(r.analytic_vanilla, 1_048_576.0);
    assert_eq!(r.analytic_gfca, 544_768.0);
    assert_eq!(r.deviation, 503_808.0);
    let r = analytic_cost(4).unwrap();
    assert_eq!(r.analytic_vanilla, 16.0);
    assert_eq!(r.analytic_gfca, 24.0);
    assert_eq!(r.deviation, -8.0);
    assert!(matches!(analytic_cost(1), Err(Error::Usage(_))));
    assert!(matches!(analytic_cost(0), Err(Error::Usage(_))));
}

#[test]
fn deviation_grows_past_the_crossover() {
    let devs: Vec<f64> = (3..=16)
        .map(|e| analytic_cost(1 << e).unwrap().deviation)
        .collect();
    assert!(devs.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(analytic_cost(8).unwrap().deviation, -16.0);
    assert_eq!(analytic_cost(16).unwrap().deviation, 0.0);
    let first_positive = (2..=16)
        .find(|&e| analytic_cost(1 << e).unwrap().deviation > 0.0)
        .unwrap();
    assert_eq!(1 << first_positive, 32);
    for n in DEFAULT_GRID {
        assert!(analytic_cost(n).unwrap().deviation > 0.0);
    }
}

#[test]
fn memory_ratio_examples() {
    assert_eq!(score_elements(64), (4096, 33 * 33));
    assert!((memory_ratio(64) - 1089.0 / 4096.0).abs() < 1e-15);
    let ratios: Vec<f64> = DEFAULT_GRID.iter().map(|&n| memory_ratio(n)).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    assert!(ratios.iter().all(|&r| r > 0.25));
}

#[test]
fn curve_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/bench.csv");
    let rows = emit_curve(&DEFAULT_GRID, &path).unwrap();
    assert_eq!(rows.len(), DEFAULT_GRID.len());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, curve_csv(&rows));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 8);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 8);
    assert_eq!(fields[0], "64");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 4096.0);
    assert!(fields[4..].iter().all(|f| f.is_empty()));
    assert!(emit_curve(&[], &path).is_err());
}

#[test]
fn gfca_forward_matches_core_attention_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c, n) = (4, 32);
    let l = Tensor::uniform(&[c, n], -1.0, 1.0, &mut rng);
    let u = Tensor::uniform(&[c, n], -1.0, 1.0, &mut rng);
    let w = |rng: &mut ChaCha8Rng| -> [Tensor; 3] {
        std::array::from_fn(|_| Tensor::uniform(&[c, c], -0.5, 0.5, rng))
    };
    let (wr, wi) = (w(&mut rng), w(&mut rng));
    let theta = 0.8;
    let got = gfca_forward(&l, &u, &wr, &wi, theta).unwrap();

    let tl = to_frequency_tokens(&l.reshape(&[c, n, 1]).unwrap()).unwrap();
    let tu = to_frequency_tokens(&u.reshape(&[c, n, 1]).unwrap()).unwrap();
    let s = 1.0 / (c as f64).sqrt();
    let ar = branch_attention(&tl.real_branch, &tu.real_branch, &wr[0], &wr[1], &wr[2], s).unwrap();
    let ai = branch_attention(&tl.imag_branch, &tu.imag_branch, &wi[0], &wi[1], &wi[2], s).unwrap();
    let (cr, ci) = adaptive_mixup(&ar, &ai, theta).unwrap();
    let pair = lrformer_core::BranchPair::new(cr, ci).unwrap();
    let want = from_frequency_tokens(&pair, n, 1)
        .unwrap()
        .reshape(&[c, n])
        .unwrap();
    assert!(got.max_abs_diff(&want).unwrap() < 1e-12);

    let v = vanilla_forward(&l, &u, &wr).unwrap();
    assert_eq!(v.shape(), &[c, n]);
    assert!(v.all_finite());
}

#[test]
fn measure_reports_every_column() {
    let r = measure(256, 8, 5, 1).unwrap();
    assert_eq!(r.n, 256);
    assert_eq!(r.channels, Some(8));
    assert_eq!(r.repeats, Some(5));
    assert!(r.measured_vanilla_ns.unwrap() > 0.0);
    assert!(r.measured_gfca_ns.unwrap() > 0.0);
    assert_eq!(r.analytic_vanilla, 65536.0);
    let line = curve_csv(&[r]).lines().nth(1).unwrap().to_string();
    assert!(line.split(',').all(|f| !f.is_empty()));
}

#[test]
fn measure_rejects_bad_requests() {
    assert!(matches!(measure(100, 4, 5, 0), Err(Error::Sizing(_))));
    assert!(matches!(measure(64, 4, 4, 0), Err(Error::Usage(_))));
    assert!(matches!(measure(64, 0, 5, 0), Err(Error::Usage(_))));
    assert!(matches!(measure(1 << 15, 4, 5, 0), Err(Error::Capacity(_))));
    assert!(matches!(measure(1 << 40, 4, 5, 0), Err(Error::Capacity(_))));
}

#[test]
fn forwards_are_deterministic_in_the_seed() {
    let mut a = ChaCha8Rng::seed_from_u64(9);
    let mut b = ChaCha8Rng::seed_from_u64(9);
    let x = Tensor::uniform(&[4, 64], -1.0, 1.0, &mut a);
    let y = Tensor::uniform(&[4, 64], -1.0, 1.0, &mut b);
    assert_eq!(x, y);
    let w: [Tensor; 3] = std::array::from_fn(|_| Tensor::uniform(&[4, 4], -0.5, 0.5, &mut a));
    assert_eq!(
        gfca_forward(&x, &x, &w, &w, 0.1).unwrap(),
        gfca_forward(&y, &y, &w, &w, 0.1).unwrap()
    );
}

#[test]
fn environment_names_the_machine() {
    let env = environment();
    let keys: Vec<&str> = env.iter().map(|(k, _)| k.as_str()).collect();
    for k in ["os", "arch", "available_parallelism", "measured_threads"] {
        assert!(keys.contains(&k), "{k}");
    }
}
