use sepca::baseline::{epca_baseline, sample_covariance};
use sepca::denoise::{denoise_stack, eblp_denoise_cartesian};
use sepca::eval::mse;
use sepca::kernel::covariance_kernel_grid;
use sepca::model::{estimate, EstimateOptions, Param};
use sepca::synth::{poisson_observe, GroundTruthModel};
use std::time::Instant;

fn main() {
    let model = GroundTruthModel::desk_preset(1).unwrap();
    let truth = model.true_covariance_grid().unwrap();
    let opts = EstimateOptions {
        support_radius: Param::Fixed(14),
        band_limit: Param::Fixed(0.15),
        include_reflections: true,
    };
    // criterion 5
    let t0 = Instant::now();
    let mut wins5 = 0;
    for s in 0..10u64 {
        let clean = model.draw_clean_stack(5000, 500 + s).unwrap();
        let counts = poisson_observe(&clean, 550 + s).unwrap();
        let m = estimate(&counts, &opts).unwrap();
        let se = covariance_kernel_grid(&m.scaled.as_block_covariance().unwrap(), &m.basis).unwrap();
        let (_, raw) = sample_covariance(&counts).unwrap();
        let e1 = (&se - &truth).norm();
        let e2 = (&raw - &truth).norm();
        wins5 += (e1 <= 0.5 * e2) as usize;
        print!("{:.3} ", e1 / e2);
    }
    println!("\ncriterion 5: {wins5}/10 wins [{:.0}s]", t0.elapsed().as_secs_f64());

    // criterion 6
    let t0 = Instant::now();
    let mut beats = 0;
    let mut mses = vec![vec![]; 3];
    for s in 0..10u64 {
        let mut per_n = vec![];
        for (i, &n) in [100usize, 1000, 10000].iter().enumerate() {
            let clean = model.draw_clean_stack(n, 600 + s).unwrap();
            let counts = poisson_observe(&clean, 650 + s).unwrap();
            let m = estimate(&counts, &opts).unwrap();
            let den = denoise_stack(&counts, &m).unwrap();
            let v = mse(&den, &clean).unwrap();
            mses[i].push(v);
            per_n.push((n, v, mse(&counts, &clean).unwrap()));
            if n == 1000 {
                let ep = epca_baseline(&counts, 700 + s).unwrap();
                let epd = eblp_denoise_cartesian(&counts, &ep.covariance, &ep.mean, 0.1).unwrap();
                let me = mse(&epd, &clean).unwrap();
                beats += ((v < per_n[1].2) && (v <= me)) as usize;
            }
        }
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (v[4] + v[5])
    };
    let m100 = med(&mut mses[0]);
    let m1000 = med(&mut mses[1]);
    let m10000 = med(&mut mses[2]);
    println!(
        "criterion 6: beats {beats}/10; medians {m100:.7} {m1000:.7} {m10000:.7}; trend ok: {} {} [{:.0}s]",
        m1000 <= 1.05 * m100,
        m10000 <= 1.05 * m1000,
        t0.elapsed().as_secs_f64()
    );

    // criterion 7
    let t0 = Instant::now();
    let mut in_range = 0;
    for s in 0..10u64 {
        let clean = model.draw_clean_stack(2000, 800 + s).unwrap();
        let counts = poisson_observe(&clean, 850 + s).unwrap();
        let m = estimate(&counts, &opts).unwrap();
        let total = m.total_rank();
        print!("{total} ");
        in_range += (4..=8).contains(&total) as usize;
    }
    let zero_model = GroundTruthModel::from_design(
        model.basis.clone(),
        model.mean_coeffs.iter().map(|&v| v / model.mean_coeffs.iter().map(|m| m * m).sum::<f64>().sqrt()).collect(),
        &[],
        0.05,
        1,
    )
    .unwrap();
    let mut zeros = 0;
    for s in 0..10u64 {
        let clean = zero_model.draw_clean_stack(5000, 900 + s).unwrap();
        let counts = poisson_observe(&clean, 950 + s).unwrap();
        let m = estimate(&counts, &opts).unwrap();
        print!("z{} ", m.total_rank());
        zeros += (m.total_rank() == 0) as usize;
    }
    println!("\ncriterion 7: signal in [4,8] {in_range}/10, null zero {zeros}/10 [{:.0}s]", t0.elapsed().as_secs_f64());

    // criterion 8: linear scaling
    let clean1 = model.draw_clean_stack(1000, 42).unwrap();
    let counts1 = poisson_observe(&clean1, 43).unwrap();
    let clean2 = model.draw_clean_stack(10000, 44).unwrap();
    let counts2 = poisson_observe(&clean2, 45).unwrap();
    let t1 = Instant::now();
    let _ = estimate(&counts1, &opts).unwrap();
    let d1 = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let _ = estimate(&counts2, &opts).unwrap();
    let d2 = t2.elapsed().as_secs_f64();
    println!("criterion 8: t(1e3) = {d1:.3}s, t(1e4) = {d2:.3}s, ratio/10 = {:.3}", d2 / d1 / 10.0);
}
