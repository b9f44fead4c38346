use herdsim_core::harness::acceptance::*;
fn main() {
    for (name, f) in [("c12", criterion_12_embedded as fn() -> herdsim_core::Result<CriterionResult>), ("c9", criterion_9_freezing), ("c6", criterion_6_critical_value)] {
        let t0 = std::time::Instant::now();
        match f() {
            Ok(r) => println!("[{name} {:?}] {}", t0.elapsed(), r.line()),
            Err(e) => println!("[{name} {:?}] ERROR: {e}", t0.elapsed()),
        }
    }
}
