//! Records a short delayed-case dataset, trains the small network for a
//! few epochs and writes the checkpoints.
//!
//! `cargo run --release --example train_predictor -- [out-dir] [epochs]`

use std::path::PathBuf;

use teleop_core::harness::{gen_data, normalized_rmse, save_models, train_all, DataPlan, TrainPlan};
use teleop_core::pilstm::NetworkTopology;

fn main() -> teleop_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("teleop-models"), PathBuf::from);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);

    let mut plan = DataPlan::standard(0);
    for run in &mut plan.train {
        run.duration = 120.0;
    }
    let data = gen_data(&plan)?;
    let train = TrainPlan {
        topology: Some(NetworkTopology::reduced()),
        epochs,
        ..TrainPlan::default()
    };
    let (models, logs) = train_all(&data.train, &train, |var, r| {
        println!("{var:9} epoch {:2}  data {:.5}  physics {:.5}  val rmse {:.5}", r.epoch, r.data_loss, r.physics_loss, r.val_rmse);
    })?;
    save_models(&out, &models, Some(&logs))?;
    for model in &models {
        let scores: Vec<f64> = data.test.iter().map(|log| normalized_rmse(model, log)).collect::<Result<_, _>>()?;
        println!("{:9} normalized test rmse {scores:.4?}", model.variable);
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}
