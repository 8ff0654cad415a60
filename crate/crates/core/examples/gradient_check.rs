//! Finite-difference gradient checks for every layer and the assembled
//! two-headed model, in f64.
//!
//! cargo run --release --example gradient_check

use uavjam::nnet::gradcheck::{check_model, run_layer_checks};
use uavjam::nnet::Variant;

fn main() {
    for r in run_layer_checks(5, 11) {
        println!("{:<24} max rel error {:.2e} over {}", r.layer, r.max_rel_error, r.shapes.join(" "));
    }
    for v in [Variant::Attention, Variant::Lstm] {
        let r = check_model(v, 128, 40, 3);
        println!("{:<24} max rel error {:.2e}", format!("model ({v})"), r.max_rel_error);
    }
}
