//! Module configurations of the modular CMA-ES.
//!
//! A configuration selects one option for each of the eleven modules. Its
//! canonical textual form is an 11-digit string where digit `k` is the option
//! index of module `k`, in this order:
//!
//! | # | module                 | 0          | 1          | 2     |
//! |---|------------------------|------------|------------|-------|
//! | 1 | active update          | off        | on         |       |
//! | 2 | elitism                | (mu,lambda)| (mu+lambda)|       |
//! | 3 | mirrored sampling      | off        | on         |       |
//! | 4 | orthogonal sampling    | off        | on         |       |
//! | 5 | sequential selection   | off        | on         |       |
//! | 6 | threshold convergence  | off        | on         |       |
//! | 7 | two-point adaptation   | off        | on         |       |
//! | 8 | pairwise selection     | off        | on         |       |
//! | 9 | recombination weights  | log        | uniform    |       |
//! |10 | base sampler           | Gaussian   | Sobol      | Halton|
//! |11 | restart scheme         | off        | IPOP       | BIPOP |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of modules (digits) in a configuration.
pub const MODULE_COUNT: usize = 11;
/// Number of binary modules, all of which precede the two ternary ones.
pub const BINARY_MODULE_COUNT: usize = 9;

/// Human-readable module names in digit order.
pub const MODULE_NAMES: [&str; MODULE_COUNT] = [
    "active",
    "elitism",
    "mirrored",
    "orthogonal",
    "sequential",
    "threshold",
    "tpa",
    "pairwise",
    "weights",
    "sampler",
    "restart",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("configuration must have {MODULE_COUNT} digits, got {0}")]
    Length(usize),
    #[error("option '{found}' out of range for module {position} ({name}): expected 0..={max}")]
    OutOfRange {
        /// 1-based module position.
        position: usize,
        name: &'static str,
        found: char,
        max: u8,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightsScheme {
    /// `ln(mu + 1/2) - ln(i)`, normalized.
    #[default]
    Logarithmic,
    /// `1 / mu` for every parent.
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    #[default]
    Gaussian,
    Sobol,
    Halton,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RestartScheme {
    #[default]
    Off,
    Ipop,
    Bipop,
}

/// One option per module. Field order matches the digit order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModuleConfiguration {
    pub active_update: bool,
    pub elitism: bool,
    pub mirrored: bool,
    pub orthogonal: bool,
    pub sequential: bool,
    pub threshold_convergence: bool,
    pub tpa: bool,
    pub pairwise: bool,
    pub weights: WeightsScheme,
    pub sampler: SamplerKind,
    pub restart: RestartScheme,
}

impl ModuleConfiguration {
    /// Option index of each module, in digit order.
    pub fn digits(&self) -> [u8; MODULE_COUNT] {
        [
            self.active_update as u8,
            self.elitism as u8,
            self.mirrored as u8,
            self.orthogonal as u8,
            self.sequential as u8,
            self.threshold_convergence as u8,
            self.tpa as u8,
            self.pairwise as u8,
            match self.weights {
                WeightsScheme::Logarithmic => 0,
                WeightsScheme::Uniform => 1,
            },
            match self.sampler {
                SamplerKind::Gaussian => 0,
                SamplerKind::Sobol => 1,
                SamplerKind::Halton => 2,
            },
            match self.restart {
                RestartScheme::Off => 0,
                RestartScheme::Ipop => 1,
                RestartScheme::Bipop => 2,
            },
        ]
    }

    /// Builds a configuration from option indices, validating each range.
    pub fn from_digits(digits: [u8; MODULE_COUNT]) -> Result<Self, ConfigError> {
        for (k, &d) in digits.iter().enumerate() {
            let max = option_count(k) - 1;
            if d > max {
                return Err(ConfigError::OutOfRange {
                    position: k + 1,
                    name: MODULE_NAMES[k],
                    found: char::from_digit(u32::from(d), 36).unwrap_or('?'),
                    max,
                });
            }
        }
        Ok(Self {
            active_update: digits[0] == 1,
            elitism: digits[1] == 1,
            mirrored: digits[2] == 1,
            orthogonal: digits[3] == 1,
            sequential: digits[4] == 1,
            threshold_convergence: digits[5] == 1,
            tpa: digits[6] == 1,
            pairwise: digits[7] == 1,
            weights: if digits[8] == 1 {
                WeightsScheme::Uniform
            } else {
                WeightsScheme::Logarithmic
            },
            sampler: match digits[9] {
                0 => SamplerKind::Gaussian,
                1 => SamplerKind::Sobol,
                _ => SamplerKind::Halton,
            },
            restart: match digits[10] {
                0 => RestartScheme::Off,
                1 => RestartScheme::Ipop,
                _ => RestartScheme::Bipop,
            },
        })
    }

    /// The 11-digit representation.
    pub fn encode(&self) -> String {
        self.digits()
            .iter()
            .map(|&d| char::from(b'0' + d))
            .collect()
    }

    pub fn decode(repr: &str) -> Result<Self, ConfigError> {
        let chars: Vec<char> = repr.chars().collect();
        if chars.len() != MODULE_COUNT {
            return Err(ConfigError::Length(chars.len()));
        }
        let mut digits = [0u8; MODULE_COUNT];
        for (k, &c) in chars.iter().enumerate() {
            let max = option_count(k) - 1;
            match c.to_digit(10) {
                Some(d) if d <= u32::from(max) => digits[k] = d as u8,
                _ => {
                    return Err(ConfigError::OutOfRange {
                        position: k + 1,
                        name: MODULE_NAMES[k],
                        found: c,
                        max,
                    })
                }
            }
        }
        Self::from_digits(digits)
    }

    /// Values of the nine binary modules as 0/1.
    pub fn binary_modules(&self) -> [u8; BINARY_MODULE_COUNT] {
        let d = self.digits();
        let mut out = [0u8; BINARY_MODULE_COUNT];
        out.copy_from_slice(&d[..BINARY_MODULE_COUNT]);
        out
    }

    /// True when no restart scheme is active, i.e. the configuration may take
    /// part in an adaptive (switching) run.
    pub fn is_switchable(&self) -> bool {
        self.restart == RestartScheme::Off
    }
}

impl fmt::Display for ModuleConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for ModuleConfiguration {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::decode(s)
    }
}

/// Number of options of the module at 0-based position `k`.
pub fn option_count(k: usize) -> u8 {
    if k < BINARY_MODULE_COUNT {
        2
    } else {
        3
    }
}

/// All configurations in lexicographic order of their digit strings.
///
/// With `include_restarts` unset the restart digit is pinned to 0, leaving
/// 1,536 of the 4,608 configurations.
pub fn enumerate_space(include_restarts: bool) -> Vec<ModuleConfiguration> {
    let last_options: u32 = if include_restarts { 3 } else { 1 };
    let total = (1u32 << BINARY_MODULE_COUNT) * 3 * last_options;
    let mut out = Vec::with_capacity(total as usize);
    // Odometer over the digits, rightmost fastest.
    let mut digits = [0u8; MODULE_COUNT];
    let limits: [u8; MODULE_COUNT] = std::array::from_fn(|k| {
        if k == MODULE_COUNT - 1 {
            last_options as u8
        } else {
            option_count(k)
        }
    });
    loop {
        out.push(ModuleConfiguration::from_digits(digits).expect("digits within range"));
        let mut k = MODULE_COUNT;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < limits[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// The ten commonly used CMA-ES variants with their names.
pub fn common_variants() -> Vec<(&'static str, ModuleConfiguration)> {
    [
        ("CMA-ES", "00000000000"),
        ("Active CMA-ES", "10000000000"),
        ("Elitist CMA-ES", "01000000000"),
        ("Mirrored-pairwise CMA-ES", "00100001000"),
        ("IPOP-CMA-ES", "00000000001"),
        ("Active IPOP-CMA-ES", "10000000001"),
        ("Elitist Active IPOP-CMA-ES", "11000000001"),
        ("BIPOP-CMA-ES", "00000000002"),
        ("Active BIPOP-CMA-ES", "10000000002"),
        ("Elitist Active BIPOP-CMA-ES", "11000000002"),
    ]
    .into_iter()
    .map(|(name, repr)| (name, ModuleConfiguration::decode(repr).expect("valid preset")))
    .collect()
}

/// Run `c1` until target `tau_index` is first reached, then switch to `c2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AdaptiveTriple {
    pub c1: ModuleConfiguration,
    pub c2: ModuleConfiguration,
    pub tau_index: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TripleError {
    #[error("adaptive label must look like C1_C2_TAU, got '{0}'")]
    Format(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("split target index {0} outside 0..=50")]
    TauIndex(usize),
    #[error("configuration {0} uses a restart scheme and cannot take part in a switch")]
    Restart(String),
}

impl AdaptiveTriple {
    pub fn new(
        c1: ModuleConfiguration,
        c2: ModuleConfiguration,
        tau_index: usize,
    ) -> Result<Self, TripleError> {
        if tau_index > 50 {
            return Err(TripleError::TauIndex(tau_index));
        }
        for c in [c1, c2] {
            if !c.is_switchable() {
                return Err(TripleError::Restart(c.encode()));
            }
        }
        Ok(Self { c1, c2, tau_index })
    }

    /// Dataset label, `C1_C2_TAU`.
    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.c1, self.c2, self.tau_index)
    }

    pub fn parse(label: &str) -> Result<Self, TripleError> {
        let parts: Vec<&str> = label.split('_').collect();
        let [c1, c2, tau] = parts.as_slice() else {
            return Err(TripleError::Format(label.to_string()));
        };
        let tau: usize = tau
            .parse()
            .map_err(|_| TripleError::Format(label.to_string()))?;
        Self::new(c1.parse()?, c2.parse()?, tau)
    }
}

impl FromStr for AdaptiveTriple {
    type Err = TripleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for AdaptiveTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn presets_encode_to_their_representation() {
        assert_eq!(ModuleConfiguration::default().encode(), "00000000000");
        let elitist = ModuleConfiguration {
            elitism: true,
            ..Default::default()
        };
        assert_eq!(elitist.encode(), "01000000000");
        let mirrored_pairwise = ModuleConfiguration {
            mirrored: true,
            pairwise: true,
            ..Default::default()
        };
        assert_eq!(mirrored_pairwise.encode(), "00100001000");
    }

    #[test]
    fn decode_bipop_preset() {
        let c = ModuleConfiguration::decode("00000000002").unwrap();
        assert_eq!(c.restart, RestartScheme::Bipop);
        assert_eq!(
            c,
            ModuleConfiguration {
                restart: RestartScheme::Bipop,
                ..Default::default()
            }
        );
    }

    #[test]
    fn decode_rejects_bad_input() {
        assert!(matches!(
            ModuleConfiguration::decode("90000000000"),
            Err(ConfigError::OutOfRange { position: 1, found: '9', .. })
        ));
        assert!(matches!(
            ModuleConfiguration::decode("00200000000"),
            Err(ConfigError::OutOfRange { position: 3, .. })
        ));
        assert_eq!(
            ModuleConfiguration::decode("0000"),
            Err(ConfigError::Length(4))
        );
        assert!(ModuleConfiguration::decode("00000000003").is_err());
        assert!(ModuleConfiguration::decode("000000000x0").is_err());
    }

    #[test]
    fn enumeration_sizes_and_order() {
        let all = enumerate_space(true);
        let free = enumerate_space(false);
        assert_eq!(all.len(), 4608);
        assert_eq!(free.len(), 1536);
        assert_eq!(all[0].encode(), "00000000000");
        let reprs: Vec<String> = all.iter().map(|c| c.encode()).collect();
        assert!(reprs.windows(2).all(|w| w[0] < w[1]));
        let filtered: Vec<_> = all
            .iter()
            .filter(|c| c.restart == RestartScheme::Off)
            .copied()
            .collect();
        assert_eq!(filtered, free);
    }

    #[test]
    fn round_trip_over_space_and_presets_are_members() {
        let all = enumerate_space(true);
        for c in &all {
            assert_eq!(ModuleConfiguration::decode(&c.encode()).unwrap(), *c);
        }
        let variants = common_variants();
        assert_eq!(variants.len(), 10);
        for (_, v) in &variants {
            assert!(all.contains(v));
        }
        let named: std::collections::HashMap<_, _> = variants.into_iter().collect();
        assert_eq!(named["Active CMA-ES"].encode(), "10000000000");
        assert_eq!(named["Active IPOP-CMA-ES"].encode(), "10000000001");
        assert_eq!(named["Elitist Active BIPOP-CMA-ES"].encode(), "11000000002");
    }

    #[test]
    fn triple_labels() {
        let t = AdaptiveTriple::parse("00000000000_01000000000_25").unwrap();
        assert!(t.c2.elitism);
        assert_eq!(t.tau_index, 25);
        assert_eq!(t.label(), "00000000000_01000000000_25");
        assert!(matches!(
            AdaptiveTriple::parse("00000000001_00000000000_3"),
            Err(TripleError::Restart(_))
        ));
        assert_eq!(
            AdaptiveTriple::parse("00000000000_00000000000_51"),
            Err(TripleError::TauIndex(51))
        );
        assert!(AdaptiveTriple::parse("00000000000").is_err());
    }

    proptest! {
        #[test]
        fn decode_encode_identity(s in "[01]{9}[012]{2}") {
            let c = ModuleConfiguration::decode(&s).unwrap();
            prop_assert_eq!(c.encode(), s);
        }
    }
}
