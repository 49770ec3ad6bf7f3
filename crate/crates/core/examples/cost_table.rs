//! Cost of every method for a ResNet-18 sized model and 10 clients.

use pufsim::cost::{cost_report, CostInputs, Method};

fn main() -> pufsim::Result<()> {
    let inputs = CostInputs {
        params: 1.1225e7,
        bytes_per_param: 4.0,
        classifier_params: 51300.0,
        clients: 10.0,
        unlearn_clients: 1.0,
        remaining_clients: 9.0,
        flops_per_sample: 0.15e9,
        samples_per_client: 5000.0,
        local_epochs: 1.0,
        rounds: 200.0,
        retention_rounds: 200.0,
        calibration_epochs: 0.5,
        ascent_epochs: 5.0,
        degradation_rounds: 6.0,
        memory_rounds: 10.0,
        recovery_rounds: 0.0,
    };
    // recovery lengths are illustrative
    let rows = [
        (Method::Retrain, 0.0),
        (Method::FedEraser, 2.0),
        (Method::Pga, 10.0),
        (Method::MoDe, 5.0),
        (Method::Not, 40.0),
        (Method::PufSpecial, 4.0),
        (Method::PufRegular, 4.0),
    ];
    let report = cost_report(&inputs, &rows)?;
    println!("{:<12} {:>6} {:>22} {:>22} {:>22}", "method", "R_rec", "comm", "comp", "storage");
    for m in &report.methods {
        println!(
            "{:<12} {:>6} {:>22} {:>22} {:>22}",
            m.method.name(),
            m.recovery_rounds,
            format!("{:.2e} ({})", m.total.comm_bytes.value, m.ratios.comm.display()),
            format!("{:.2e} ({})", m.total.comp_flops.value, m.ratios.comp.display()),
            format!("{:.2e} ({})", m.total.storage_bytes.value, m.ratios.storage.display()),
        );
    }
    Ok(())
}
