//! Seeded pseudo-random generators for test inputs: LTSs, monotone
//! formulas, and regular expressions. All randomness flows through the
//! caller's RNG so tests stay reproducible.

use crate::lts::{Label, Lts};
use crate::mucalc::{ActionFormula, Formula, RegularFormula};
use crate::network::{Network, SyncRule};
use rand::Rng;
use std::collections::BTreeSet;

pub fn random_lts(rng: &mut impl Rng, labels: &[Label], max_states: usize) -> Lts {
    let n = rng.gen_range(1..=max_states.max(1));
    let m = if labels.is_empty() {
        0
    } else {
        rng.gen_range(0..=2 * n)
    };
    let transitions = (0..m)
        .map(|_| {
            (
                rng.gen_range(0..n),
                labels[rng.gen_range(0..labels.len())].clone(),
                rng.gen_range(0..n),
            )
        })
        .collect();
    Lts::new(n, 0, transitions).expect("generated transitions are in range")
}

pub fn random_action(rng: &mut impl Rng, labels: &[Label]) -> ActionFormula {
    match rng.gen_range(0..6) {
        0 => ActionFormula::Any,
        1 => {
            let mut set = BTreeSet::new();
            let count = rng.gen_range(1..=labels.len().min(2));
            while set.len() < count {
                set.insert(labels[rng.gen_range(0..labels.len())].clone());
            }
            ActionFormula::NotIn(set)
        }
        _ => ActionFormula::One(labels[rng.gen_range(0..labels.len())].clone()),
    }
}

pub fn random_regex(rng: &mut impl Rng, labels: &[Label], depth: usize) -> RegularFormula {
    if depth == 0 || rng.gen_bool(0.4) {
        return RegularFormula::Atom(ActionFormula::One(
            labels[rng.gen_range(0..labels.len())].clone(),
        ));
    }
    match rng.gen_range(0..3) {
        0 => RegularFormula::Concat(
            Box::new(random_regex(rng, labels, depth - 1)),
            Box::new(random_regex(rng, labels, depth - 1)),
        ),
        1 => RegularFormula::Choice(
            Box::new(random_regex(rng, labels, depth - 1)),
            Box::new(random_regex(rng, labels, depth - 1)),
        ),
        _ => RegularFormula::Star(Box::new(random_regex(rng, labels, depth - 1))),
    }
}

/// A closed, alternation-free formula with pairwise-distinct binder names
/// in which every variable occurrence sits under an even number of
/// negations relative to its own binder, so the result is monotone by
/// construction.
pub fn random_formula(rng: &mut impl Rng, labels: &[Label], depth: usize) -> Formula {
    let mut counter = 0;
    gen(rng, labels, depth, &mut Vec::new(), true, &mut counter)
}

// `scope` records the negation parity and sign at each binder; an
// occurrence is allowed only where the current parity matches its binder's
// and no binder of the opposite sign lies in between, which keeps the
// formula alternation-free.
fn gen(
    rng: &mut impl Rng,
    labels: &[Label],
    depth: usize,
    scope: &mut Vec<(String, bool, bool)>,
    even: bool,
    counter: &mut u32,
) -> Formula {
    if depth == 0 {
        return leaf(rng, scope, even);
    }
    match rng.gen_range(0..10) {
        0 => Formula::or(
            gen(rng, labels, depth - 1, scope, even, counter),
            gen(rng, labels, depth - 1, scope, even, counter),
        ),
        1 => Formula::and(
            gen(rng, labels, depth - 1, scope, even, counter),
            gen(rng, labels, depth - 1, scope, even, counter),
        ),
        2 | 3 => Formula::dia(
            random_action(rng, labels),
            gen(rng, labels, depth - 1, scope, even, counter),
        ),
        4 => Formula::boxm(
            random_action(rng, labels),
            gen(rng, labels, depth - 1, scope, even, counter),
        ),
        5 => Formula::not(gen(rng, labels, depth - 1, scope, !even, counter)),
        6 | 7 => {
            *counter += 1;
            let name = format!("V{counter}");
            let is_mu = rng.gen_bool(0.5);
            scope.push((name.clone(), even, is_mu));
            let body = gen(rng, labels, depth - 1, scope, even, counter);
            scope.pop();
            if is_mu {
                Formula::mu(&name, body)
            } else {
                Formula::nu(&name, body)
            }
        }
        _ => leaf(rng, scope, even),
    }
}

fn leaf(rng: &mut impl Rng, scope: &mut Vec<(String, bool, bool)>, even: bool) -> Formula {
    let candidates: Vec<&String> = scope
        .iter()
        .enumerate()
        .filter(|(i, (_, parity, sign))| {
            *parity == even && scope[i + 1..].iter().all(|(_, _, s)| s == sign)
        })
        .map(|(_, (name, _, _))| name)
        .collect();
    if !candidates.is_empty() && rng.gen_bool(0.6) {
        Formula::var(candidates[rng.gen_range(0..candidates.len())])
    } else if rng.gen_bool(0.5) {
        Formula::True
    } else {
        Formula::False
    }
}

/// A random network over the alphabet {a, b, c}: between one and
/// `max_components` components of at most `max_states` states each, and
/// between one and `max_rules` synchronisation rules. Roughly a third of
/// the rules (when possible) synchronise two components; the rest keep a
/// single component active. Results are drawn from the same alphabet so
/// formula modalities can match them.
pub fn random_network(
    rng: &mut impl Rng,
    max_components: usize,
    max_states: usize,
    max_rules: usize,
) -> Network {
    let letters = [Label::new("a"), Label::new("b"), Label::new("c")];
    let k = rng.gen_range(1..=max_components.max(1));
    let components: Vec<Lts> = (0..k)
        .map(|_| random_lts(rng, &letters, max_states))
        .collect();
    let names = (0..k).map(|i| format!("c{i}.aut")).collect();
    let mut rules = Vec::new();
    for _ in 0..rng.gen_range(1..=max_rules.max(1)) {
        let mut vector: Vec<Option<Label>> = vec![None; k];
        let i = rng.gen_range(0..k);
        vector[i] = Some(letters[rng.gen_range(0..3)].clone());
        if k >= 2 && rng.gen_bool(0.3) {
            let mut j = rng.gen_range(0..k);
            while j == i {
                j = rng.gen_range(0..k);
            }
            vector[j] = Some(letters[rng.gen_range(0..3)].clone());
        }
        rules.push(SyncRule::new(vector, letters[rng.gen_range(0..3)].clone()));
    }
    Network::new(components, names, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_formulas_are_valid() {
        let labels = [Label::new("a"), Label::new("b")];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = labels.iter().cloned().collect();
        for _ in 0..200 {
            let f = random_formula(&mut rng, &labels, 4);
            // Closed and monotone by construction; the disjunctive
            // conversion would panic on an open formula.
            let r = crate::mucalc::resolve_actions(&f, &sigma);
            let d = crate::mucalc::to_disjunctive(&r);
            assert!(crate::mucalc::is_disjunctive(&d));
            let l = crate::mucalc::block_label(&d);
            assert!(crate::mucalc::is_alternation_free(&l), "{f:?}");
        }
    }

    #[test]
    fn generated_networks_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = random_network(&mut rng, 3, 5, 6);
            assert!(n.size() >= 1 && n.size() <= 3);
            assert!(!n.rules().is_empty());
            for rule in n.rules() {
                assert_eq!(rule.vector().len(), n.size());
            }
        }
    }

    #[test]
    fn generation_is_deterministic_for_a_seed() {
        let labels = [Label::new("a")];
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            assert_eq!(
                random_formula(&mut r1, &labels, 4),
                random_formula(&mut r2, &labels, 4)
            );
            let a = random_lts(&mut r1, &labels, 5);
            let b = random_lts(&mut r2, &labels, 5);
            assert_eq!(a.state_count(), b.state_count());
            assert_eq!(a.transitions(), b.transitions());
        }
    }
}
