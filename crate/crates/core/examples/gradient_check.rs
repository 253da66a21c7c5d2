use teleop_core::pilstm::gradcheck::gradcheck;
use teleop_core::pilstm::NetworkTopology;

fn main() -> teleop_core::Result<()> {
    for physics_weight in [0.0, 0.1] {
        let report = gradcheck(NetworkTopology::tiny(), physics_weight, 1, 1e-6)?;
        println!(
            "physics weight {physics_weight}: {} parameters, worst relative error {:.2e} ({}: analytic {:+.6e}, numeric {:+.6e})",
            report.parameters, report.max_relative_error, report.worst_parameter, report.analytic, report.numeric
        );
    }
    Ok(())
}
