//! Built-in demonstration configurations.

use std::path::Path;

use crate::error::{Error, Result};

use super::config::{load_config_str, LoadedConfig};

pub struct Demo {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

const FREE_STREAMING: &str = r#"seed = 0

[problem.domain]
q_start = -1.0
q_length = 2.0
p_start = -2.0
p_length = 4.0

[problem.time]
window = 0.25
modes = 8

[problem.initial]
expression = "exp(-q^2/0.125) * exp(-p^2/0.5)"

[discretization]
order = 3
modes = 8

[refinement]
epsilon = 1e-3
level_cap = 6

[output]
dir = "out/free_streaming"
"#;

const LOCALIZED_MODE: &str = r#"seed = 0

[problem.domain]
q_start = -4.0
q_length = 8.0
p_start = -4.0
p_length = 8.0

[problem.time]
window = 0.5
modes = 4

[problem.initial]
kind = "mode"
q = { kind = "scaling", level = 0, shift = 0 }
p = { kind = "wavelet", level = 3, shift = 3 }

[discretization]
order = 3
modes = 16

[refinement]
epsilon = 1e-3
level_cap = 5

[output]
dir = "out/localized_mode"
figure = "fig1"
"#;

const CHAOTIC_PATTERN: &str = r#"seed = 7

[problem]
external = "q^2/2"

[problem.domain]
q_start = -4.0
q_length = 8.0
p_start = -4.0
p_length = 8.0

[problem.time]
window = 0.5
modes = 4

[problem.initial]
kind = "random"
level = 5

[discretization]
order = 3
modes = 32

[refinement]
enabled = false

[output]
dir = "out/chaotic_pattern"
figure = "fig2"
"#;

const VLASOV_WEAK: &str = r#"seed = 0

[problem]
pair = "(q1 - q2)^2/2"
coupling = 0.05

[problem.domain]
q_start = -4.0
q_length = 8.0
p_start = -4.0
p_length = 8.0

[problem.time]
window = 0.25
windows = 2
modes = 4

[problem.initial]
expression = "(1 + cos(pi*q/4)) * (1 + cos(pi*p/4)) / 64"

[discretization]
order = 5
modes = 4

[closure]
kind = "vlasov"

[refinement]
epsilon = 1e-3
level_cap = 4

[output]
dir = "out/vlasov_weak"
figure = "fig3"
"#;

pub const DEMOS: &[Demo] = &[
    Demo {
        name: "free_streaming",
        summary: "Gaussian packet under free streaming, refined to 1e-3",
        toml: FREE_STREAMING,
    },
    Demo {
        name: "localized_mode",
        summary: "single stationary basis mode (fig1)",
        toml: LOCALIZED_MODE,
    },
    Demo {
        name: "chaotic_pattern",
        summary: "random multiscale data in a harmonic trap (fig2)",
        toml: CHAOTIC_PATTERN,
    },
    Demo {
        name: "vlasov_weak",
        summary: "weakly coupled mean-field evolution of a smooth bump (fig3)",
        toml: VLASOV_WEAK,
    },
];

pub fn find_demo(name: &str) -> Result<&'static Demo> {
    DEMOS.iter().find(|d| d.name == name).ok_or_else(|| {
        let names: Vec<_> = DEMOS.iter().map(|d| d.name).collect();
        Error::Config(format!("unknown demo {name:?} (available: {})", names.join(", ")))
    })
}

/// Parses a demo; its output directory is kept unless overridden later.
pub fn load_demo(name: &str) -> Result<LoadedConfig> {
    let d = find_demo(name)?;
    load_config_str(d.toml, &format!("demo:{}", d.name), Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_demo_builds() {
        for d in DEMOS {
            let loaded = load_demo(d.name).unwrap_or_else(|e| panic!("{}: {e}", d.name));
            loaded.build().unwrap_or_else(|e| panic!("{}: {e}", d.name));
        }
        assert!(load_demo("nope").is_err());
    }
}
