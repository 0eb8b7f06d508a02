//! Named experiment configurations shipped with the binary.

use dbar_core::grid::DEFAULT_MEMORY_BUDGET;
use dbar_core::solver::SolveOptions;

use crate::config::{DomainConfig, ExperimentConfig, FormConfig, FormShape, GridConfig, ScheduleConfig, VerifyConfig};

pub const PRESETS: &[&str] = &[
    "zero-form",
    "n2-q0-z2",
    "n2-q1-constant",
    "n2-q1-bump",
    "n3-q1-constant",
    "singular-detector-input",
];

fn base(n: usize, res: Vec<usize>, degree: usize, shape: FormShape) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        threads: None,
        output: None,
        domain: DomainConfig {
            n,
            polyradii: vec![1.0; n],
            scale_to_unit_diameter: false,
        },
        grid: GridConfig {
            resolution: res[0],
            resolutions: if res.iter().all(|&r| r == res[0]) { None } else { Some(res) },
            memory_budget: DEFAULT_MEMORY_BUDGET,
        },
        form: FormConfig {
            degree,
            shape: Some(shape),
            components: Vec::new(),
        },
        schedule: ScheduleConfig {
            deltas: None,
            start: 0.25,
            start_spacings: None,
            ratio: 0.5,
            count: None,
        },
        solver: SolveOptions::default(),
        verify: VerifyConfig::default(),
        sweep: None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "zero-form" => base(2, vec![17, 17], 1, FormShape::Zero),
        "n2-q0-z2" => base(2, vec![17, 17], 0, FormShape::Z2),
        "n2-q1-constant" => base(2, vec![17, 17], 1, FormShape::Constant),
        "n2-q1-bump" => base(2, vec![17, 17], 1, FormShape::Bump),
        "n3-q1-constant" => base(3, vec![17, 9, 9], 1, FormShape::Constant),
        "singular-detector-input" => {
            let mut c = base(2, vec![171, 9], 1, FormShape::Constant);
            // eps down to 0.19 / 8 needs two plane-1 spacings
            c.schedule.start_spacings = Some(4.0);
            c.schedule.count = Some(3);
            c.verify.checks = vec!["detector".into()];
            c
        }
        _ => return None,
    };
    Some(cfg)
}
