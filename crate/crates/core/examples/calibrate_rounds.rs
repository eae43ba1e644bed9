//! Sweeps the mean game length and prints the pooled reply statistics of
//! 8-player, 4-game series next to the reference model values.
//!
//! cargo run --release -p expert-game --example calibrate_rounds -- [replicas] [jitter] [lo] [hi]

use expert_game::analysis::reply_stats;
use expert_game::sim::{run_replicas, SeriesConfig};

const TARGET: [f64; 5] = [2.64, 2.73, 0.25, 0.46, 0.65];

fn main() {
    let mut args = std::env::args().skip(1);
    let replicas: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let jitter: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let lo: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let hi: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);

    println!("round_mean  lag_N  lag_Y  rate_N  rate_Y  noreply_knew  worst/tol");
    for round_mean in lo..=hi {
        let cfg = SeriesConfig {
            round_mean,
            round_jitter: jitter,
            n_replicas: replicas,
            master_seed: 2013,
            ..Default::default()
        };
        let series = run_replicas(&cfg).expect("valid config");
        let s = reply_stats(series.iter().flat_map(|s| s.games.iter()));
        let got = [
            s.lag_n.unwrap_or(f64::NAN),
            s.lag_y.unwrap_or(f64::NAN),
            s.rate_n.unwrap_or(f64::NAN),
            s.rate_y.unwrap_or(f64::NAN),
            s.rate_noreply_with_knowledge.unwrap_or(f64::NAN),
        ];
        let tol = [0.35, 0.35, 0.10, 0.10, 0.10];
        let worst = (0..5)
            .map(|i| (got[i] - TARGET[i]).abs() / tol[i])
            .fold(0.0, f64::max);
        println!(
            "{round_mean:>10}  {:.3}  {:.3}  {:.3}   {:.3}   {:.3}         {worst:.2}",
            got[0], got[1], got[2], got[3], got[4]
        );
    }
}
