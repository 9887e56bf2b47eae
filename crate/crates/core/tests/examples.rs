// Each runnable example is compiled in here and executed once.

macro_rules! example {
    ($module:ident, $file:literal) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(metrics, "metrics.rs");
example!(train_segmenter, "train_segmenter.rs");
example!(crossval, "crossval.rs");
example!(severity_grid, "severity_grid.rs");
example!(stacking, "stacking.rs");
example!(slide_triage, "slide_triage.rs");

#[test]
fn metrics_example_runs() {
    metrics::run().unwrap();
}

#[test]
fn train_segmenter_example_runs() {
    train_segmenter::run().unwrap();
}

#[test]
fn crossval_example_runs() {
    crossval::run().unwrap();
}

#[test]
fn severity_grid_example_runs() {
    severity_grid::run().unwrap();
}

#[test]
fn stacking_example_runs() {
    stacking::run().unwrap();
}

#[test]
fn slide_triage_example_runs() {
    slide_triage::run().unwrap();
}
