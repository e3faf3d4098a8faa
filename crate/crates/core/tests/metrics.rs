use freqshield::metrics::{
    accuracy, append_csv, append_jsonl, format_table, ms_ssim, ms_ssim_scales, ms_ssim_weights, mse_l1, psnr,
    psnr_from_mse, read_jsonl, ssim, Bounds, ExperimentReport, SimilarityReport, CSV_COLUMNS,
};
use freqshield::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen::<f64>())
}

/// SSIM straight from its definition: a 2-D Gaussian weight table applied
/// at every fully contained window position, no separable filtering.
fn ssim_direct(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let gray = |t: &Tensor<f64>, y: usize, x: usize| (0..c).map(|ch| t.data()[(ch * h + y) * w + x] * 255.0).sum::<f64>() / c as f64;
    let mut weights = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2);
            *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut sum = 0.0;
    let mut count = 0.0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = weights[i][j] / total;
                    let (p, q) = (gray(a, y + i, x + j), gray(b, y + i, x + j));
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    sum / count
}

#[test]
fn mse_l1_fixtures() {
    let a = random(&[3, 8, 8], 1);
    assert_eq!(mse_l1(&a, &a).unwrap(), (0.0, 0.0));
    let zeros = Tensor::<f64>::zeros(&[3, 8, 8]);
    let ones = Tensor::full(&[3, 8, 8], 1.0);
    assert_eq!(mse_l1(&zeros, &ones).unwrap(), (65025.0, 255.0));
    assert!(matches!(mse_l1(&zeros, &random(&[3, 8, 4], 0)), Err(Error::Dimension(_))));
}

#[test]
fn psnr_fixtures() {
    let a = random(&[1, 16, 16], 2);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    assert_eq!(psnr_from_mse(650.25), 20.0);
    let zeros = Tensor::<f64>::zeros(&[1, 4, 4]);
    let shifted = Tensor::full(&[1, 4, 4], 0.1);
    assert!((psnr(&zeros, &shifted).unwrap() - 20.0).abs() < 1e-9);
    let mut last = f64::INFINITY;
    for mse in [0.5, 1.0, 10.0, 650.25, 5000.0] {
        let p = psnr_from_mse(mse);
        assert!(p < last);
        last = p;
    }
}

#[test]
fn ssim_fixtures() {
    let a = random(&[3, 16, 16], 3);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);

    let black = Tensor::<f64>::zeros(&[1, 16, 16]);
    let white = Tensor::full(&[1, 16, 16], 1.0);
    let c1 = (0.01f64 * 255.0).powi(2);
    let closed_form = c1 / (255.0f64.powi(2) + c1);
    let s = ssim(&black, &white).unwrap();
    assert!(s <= 1e-3);
    assert!((s - closed_form).abs() < 1e-12);

    assert!(matches!(ssim(&random(&[1, 10, 16], 0), &random(&[1, 10, 16], 1)), Err(Error::Dimension(_))));
}

#[test]
fn ssim_matches_direct_formula() {
    for seed in 0..4 {
        let a = random(&[3, 20, 17], seed);
        let b = random(&[3, 20, 17], seed + 100);
        let fast = ssim(&a, &b).unwrap();
        let slow = ssim_direct(&a, &b);
        assert!((fast - slow).abs() <= 1e-6, "{fast} vs {slow}");
    }
    // A correlated pair exercises the covariance term.
    let a = random(&[1, 24, 24], 9);
    let noise = random(&[1, 24, 24], 10);
    let b = Tensor::from_fn(&[1, 24, 24], |i| 0.8 * a.data()[i] + 0.2 * noise.data()[i]);
    assert!((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs() <= 1e-6);
}

#[test]
fn ms_ssim_scale_selection() {
    assert_eq!(ms_ssim_scales(32), 3);
    assert_eq!(ms_ssim_scales(176), 5);
    assert_eq!(ms_ssim_scales(512), 5);
    assert_eq!(ms_ssim_scales(16), 2);
    assert_eq!(ms_ssim_scales(7), 0);
    let w = ms_ssim_weights(3);
    assert_eq!(w.len(), 3);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let raw = [0.0448, 0.2856, 0.3001];
    for (x, r) in w.iter().zip(raw) {
        assert!((x / r - 1.0 / (0.0448 + 0.2856 + 0.3001)).abs() < 1e-12);
    }
    assert!((ms_ssim_weights(5).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(matches!(ms_ssim(&random(&[1, 6, 6], 0), &random(&[1, 6, 6], 1)), Err(Error::Dimension(_))));
}

#[test]
fn ms_ssim_identity_and_monotone_degradation() {
    let a = random(&[3, 32, 32], 4);
    assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);

    // Smooth base image so that structure is actually destroyed by noise.
    let base = Tensor::from_fn(&[3, 32, 32], |i| {
        let (y, x) = (((i / 32) % 32) as f64, (i % 32) as f64);
        0.5 + 0.3 * (y / 5.0).sin() * (x / 7.0).cos()
    });
    let noise = random(&[3, 32, 32], 5);
    let mut last = f64::INFINITY;
    for t in [0.0, 0.25, 0.5, 1.0] {
        let b = Tensor::from_fn(&[3, 32, 32], |i| (1.0 - t) * base.data()[i] + t * noise.data()[i]);
        let m = ms_ssim(&base, &b).unwrap();
        assert!(m < last || t == 0.0, "t = {t}: {m} !< {last}");
        last = m;
    }
}

#[test]
fn large_images_use_five_scales() {
    let a = random(&[1, 176, 176], 6);
    let b = Tensor::from_fn(&[1, 176, 176], |i| (a.data()[i] * 0.9 + 0.05).min(1.0));
    let m = ms_ssim(&a, &b).unwrap();
    assert!(m > 0.0 && m < 1.0);
    assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn similarity_report_averages_and_compares() {
    let xs: Vec<_> = (0..3).map(|s| random(&[3, 16, 16], s)).collect();
    let perfect = SimilarityReport::evaluate(&xs, &xs).unwrap();
    assert_eq!(perfect.mse, 0.0);
    assert_eq!(perfect.psnr, f64::INFINITY);
    assert!((perfect.ssim - 1.0).abs() < 1e-9);
    let flat: Vec<_> = (0..3).map(|_| Tensor::full(&[3, 16, 16], 0.5)).collect();
    let poor = SimilarityReport::evaluate(&xs, &flat).unwrap();
    assert_eq!(poor.worse_count(&perfect), 5);
    assert_eq!(perfect.worse_count(&poor), 0);
    assert!(SimilarityReport::evaluate(&xs, &flat[..2]).is_err());
}

#[test]
fn accuracy_fixtures() {
    let logits = Tensor::new(vec![2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
    assert_eq!(accuracy(&logits, &[0, 1]).unwrap(), 100.0);
    assert_eq!(accuracy(&logits, &[0, 0]).unwrap(), 50.0);
    let tie = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
    assert_eq!(accuracy(&tie, &[0]).unwrap(), 100.0);
    assert_eq!(accuracy(&tie, &[1]).unwrap(), 0.0);
    assert!(accuracy(&logits, &[0]).is_err());
}

#[test]
fn report_delta_fixtures() {
    let celeba = ExperimentReport::new("learned", "celeba", 93.27, 61.60, 0).unwrap();
    assert_eq!(format!("{:.2}", celeba.delta), "31.67");
    assert!((celeba.delta - 31.67).abs() < 1e-9);
    let fairface = ExperimentReport::new("learned", "fairface", 89.67, 23.63, 0).unwrap();
    assert_eq!(format!("{:.2}", fairface.delta), "66.04");
    assert!((fairface.delta - 66.04).abs() < 1e-9);
    assert!(celeba.delta_consistent());
    assert!(matches!(ExperimentReport::new("x", "y", 100.5, 1.0, 0), Err(Error::Validation(_))));
    assert!(matches!(ExperimentReport::new("x", "y", 50.0, -1.0, 0), Err(Error::Validation(_))));
}

#[test]
fn report_round_trips_with_inf_psnr() {
    let sim = SimilarityReport {
        mse: 3689.50,
        l1: 48.08,
        ssim: 0.123456789,
        ms_ssim: 0.3,
        psnr: f64::INFINITY,
    };
    let r = ExperimentReport::new("learned", "synthetic", 97.1875, 26.5625, 7)
        .unwrap()
        .with_radius(Some(0.05))
        .with_bounds(Bounds {
            utility_upper: 99.0,
            privacy_lower: 25.0,
        })
        .with_similarity(sim)
        .with_config(serde_json::json!({"lambda_p": 1.0}));
    let line = r.to_json_line();
    assert!(line.contains("\"psnr\":\"inf\""));
    assert_eq!(ExperimentReport::from_json_line(&line).unwrap(), r);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.jsonl");
    append_jsonl(&path, &[r.clone()]).unwrap();
    append_jsonl(&path, &[r.clone()]).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), vec![r.clone(), r.clone()]);

    let csv = dir.path().join("reports.csv");
    append_csv(&csv, &[r.clone()]).unwrap();
    append_csv(&csv, &[r.clone()]).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_COLUMNS.join(","));
    assert_eq!(lines[1], "learned,synthetic,0.05,97.1875,26.5625,70.625,3689.5,48.08,0.123456789,0.3,inf,7");
}

#[test]
fn table_sorts_by_delta_and_flags_tampering() {
    let a = ExperimentReport::new("noise", "synthetic", 80.0, 70.0, 0).unwrap();
    let b = ExperimentReport::new("learned", "synthetic", 90.0, 30.0, 0).unwrap();
    let mut c = ExperimentReport::new("unet_only", "synthetic", 95.0, 80.0, 0).unwrap().with_similarity(SimilarityReport {
        mse: 0.0,
        l1: 0.0,
        ssim: 1.0,
        ms_ssim: 1.0,
        psnr: f64::INFINITY,
    });
    let table = format_table(&[a.clone(), b.clone(), c.clone()]);
    let order: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().find(|w| *w != "*").unwrap()).collect();
    assert_eq!(order, ["learned", "unet_only", "noise"]);
    assert!(table.lines().nth(1).unwrap().starts_with('*'));
    assert!(table.contains("inf"));
    assert!(!table.contains("warning"));

    c.delta += 1.0;
    let table = format_table(&[a, b, c]);
    assert!(table.contains("warning: unet_only"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_symmetric(seed in 0u64..1000) {
        let a = random(&[3, 16, 16], seed);
        let b = random(&[3, 16, 16], seed + 1);
        let (m1, l1) = mse_l1(&a, &b).unwrap();
        let (m2, l2) = mse_l1(&b, &a).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-9 && (l1 - l2).abs() <= 1e-9);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-9);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        let m = ms_ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&m));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
        prop_assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
    }
}
