//! Verify analytic gradients against central finite differences: every layer
//! type individually, then the whole network at a small scale.

use tdanet::cli::{full_model_grad_check, layer_grad_checks};

fn main() {
    for (name, report) in layer_grad_checks().expect("suite runs") {
        println!("{name:<38} {report}");
        assert!(report.passed(), "{name} failed");
    }

    let (report, names) = full_model_grad_check(Some(32)).expect("full model check runs");
    println!("{:<38} {report}", "full model (N=16, S=2, B=2)");
    if let Some((pi, ei, _, _)) = report.worst {
        println!("  worst element: {} [{}]", names[pi], ei);
    }
    assert!(report.passed());
}
