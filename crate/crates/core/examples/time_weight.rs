//! Tabulates the timestep weight for the ablation grid and locates each peak.

use authface::facial::{time_weight, LogitConvention, TimeWeightParams};

fn argmax(p: &TimeWeightParams) -> (f64, f64) {
    (1..10_000)
        .map(|i| {
            let t = i as f64 / 10_000.0;
            (t, time_weight(t, p).unwrap())
        })
        .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
}

fn main() {
    let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    print!("{:>24}", "t =");
    for t in &grid {
        print!("{t:>7.1}");
    }
    println!("{:>10}", "peak");
    for logit in [LogitConvention::Standard, LogitConvention::PaperSymmetric] {
        for m in [-0.5, 0.0, 0.5] {
            for s in [0.5, 1.0] {
                let p = TimeWeightParams { m, s, logit, ..Default::default() };
                print!("{:>24}", format!("{logit:?} m={m:+.1} s={s:.1}"));
                for t in &grid {
                    print!("{:7.3}", time_weight(*t, &p).unwrap());
                }
                println!("{:10.3}", argmax(&p).0);
            }
        }
    }
}
