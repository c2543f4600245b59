//! Runs the standard 20-cell grid and prints the trends per city/budget combo.
//!
//! cargo run --release --example grid_sweep -- [seed]

use edgemarket::harness::{linear_fit, run_sweep, SweepSpec};

fn main() -> Result<(), edgemarket::Error> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be a u64"))
        .unwrap_or(2024);
    let spec = SweepSpec::standard(seed);
    let cells = run_sweep(&spec)?;

    println!(
        "{:>5} {:>6} {:>7} {:>9} {:>10} {:>8} {:>11} {:>12} {:>12}",
        "users",
        "cities",
        "budget",
        "eng_avg",
        "eng_var",
        "cmp_avg",
        "gas_avg",
        "cons_var",
        "prov_var"
    );
    for m in &cells {
        println!(
            "{:>5} {:>6} {:>7} {:>9.4} {:>10.6} {:>8.2} {:>11.1} {:>12.3e} {:>12.3e}",
            m.users_per_role,
            m.cities,
            m.budget_base_usd,
            m.eng_rate.avg_f64(),
            m.eng_rate.var_f64(),
            m.comparisons.avg_f64(),
            m.gas.avg_f64(),
            m.consumer_gas.var_f64(),
            m.provider_gas.var_f64(),
        );
    }

    for combo in cells.chunks(spec.users.len()) {
        let points: Vec<(f64, f64)> = combo
            .iter()
            .map(|m| (2.0 * m.users_per_role as f64, m.gas.avg_f64()))
            .collect();
        let fit = linear_fit(&points).expect("five sizes");
        println!(
            "cities={} budget=${}: gas ~ {:.1}*|C+P| + {:.1}, R^2 = {:.4}",
            combo[0].cities, combo[0].budget_base_usd, fit.slope, fit.intercept, fit.r_squared
        );
    }
    Ok(())
}
