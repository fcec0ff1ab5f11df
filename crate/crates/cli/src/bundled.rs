//! Scenarios shipped inside the binary, one per acceptance criterion.

pub struct Bundled {
    pub criterion: &'static str,
    pub claim: &'static str,
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! bundled {
    ($crit:literal, $claim:literal, $name:literal) => {
        Bundled {
            criterion: $crit,
            claim: $claim,
            name: $name,
            source: include_str!(concat!("../scenarios/", $name, ".json")),
        }
    };
}

pub const BUNDLED: &[Bundled] = &[
    bundled!("AC-1", "delta t^{-1/2}", "delta-onesided-rate"),
    bundled!("AC-2", "one-sided Fourier eigenmode", "fourier-onesided"),
    bundled!("AC-3", "kernel vs Runge-Kutta oracle", "delta-oracle-check"),
    bundled!("AC-4", "symmetric O(1/t) bound", "symmetric-range-rate"),
    bundled!("AC-5", "one-sided Cesaro deviation 1/n", "delta-cesaro"),
    bundled!("AC-6", "block sequence is not good", "blocks-cesaro"),
    bundled!("AC-7", "symmetric Cesaro stencil", "delta-symmetric-cesaro"),
    bundled!("AC-8", "finite ring decays at the spectral gap", "ring-64"),
    bundled!(
        "AC-9",
        "platoon settles under grid-searched gains",
        "platoon-stable"
    ),
    bundled!("AC-10", "kernel mass and tail certificates", "kernel-audit"),
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}

/// One line per scenario: `<criterion> <claim>  [<name>]`.
pub fn listing() -> String {
    let width = BUNDLED
        .iter()
        .map(|b| b.criterion.len() + 1 + b.claim.len())
        .max()
        .unwrap_or(0);
    BUNDLED
        .iter()
        .map(|b| {
            let head = format!("{} {}", b.criterion, b.claim);
            format!("{head:<width$}  {}\n", b.name)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn every_bundled_scenario_validates_and_matches_its_name() {
        for b in BUNDLED {
            let sc = Scenario::parse(b.source).unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert_eq!(sc.name, b.name);
        }
    }

    #[test]
    fn listing_mentions_each_criterion() {
        let text = listing();
        assert!(text.contains("AC-1 delta t^{-1/2}"));
        assert!(text.contains("AC-4 symmetric O(1/t) bound"));
        assert_eq!(text.lines().count(), 10);
    }
}
