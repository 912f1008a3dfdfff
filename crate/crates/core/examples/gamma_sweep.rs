//! Sweeps the power exponent of the relative reputation on a split where
//! participants see different numbers of classes.

use fairfed::data::{Regime, SplitSpec};
use fairfed::experiment::{sweep, ExperimentConfig, SweepParameter};
use fairfed::fairness::FairnessParams;

fn main() -> fairfed::Result<()> {
    let gammas = [0.1, 0.2, 0.5, 1.0];
    let template = ExperimentConfig {
        fairness: FairnessParams::gamma(1.0),
        split: SplitSpec {
            regime: Regime::NiidClasses,
            participants: 10,
            ..SplitSpec::default()
        },
        ..ExperimentConfig::default()
    };
    println!("gamma  mean_acc  max_acc  pearson_rho  q");
    for (g, t) in gammas
        .iter()
        .zip(sweep(&template, SweepParameter::Gamma, &gammas)?)
    {
        let q: Vec<f64> = t.rows.iter().map(|r| r.final_q).collect();
        println!(
            "{g:<5}  {:.4}    {:.4}   {:.4}       {q:.2?}",
            t.mean_accuracy().1,
            t.max_accuracy().1,
            t.pearson()
        );
    }
    Ok(())
}
