use handforge::gradcheck::{gradcheck, GradcheckOptions};
use handforge::{generate_default_model, ProceduralConfig};

#[test]
fn default_hand_derivatives_match_central_differences() {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let report = gradcheck(&model, &GradcheckOptions { configs: 12, seed: 5, ..Default::default() }).unwrap();
    for b in &report.blocks {
        println!("{:<28} {:>9} entries  max {:.3e} at {:?}", b.name, b.entries, b.max_error, b.worst);
    }
    assert!(report.passed(), "max error {:.3e}", report.max_error());
}
