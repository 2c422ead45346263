//! The two checking routes: flatten the whole network and evaluate, or
//! fold components into the formula graph one at a time and simplify after
//! each fold, returning as soon as the graph collapses to a constant.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::eval;
use crate::fgraph::{self, encode, FgraphError, FormulaGraph, GLabel};
use crate::lts::{Label, Lts, Transition};
use crate::mucalc::{
    block_label, expand_regular, is_alternation_free, resolve_actions, to_disjunctive, Formula,
};
use crate::network::{self, NetError, Network};
use crate::simplify::{constant_verdict, simplify_pipeline, SimplifyError, Verdict as GraphVerdict};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("the formula alternates least and greatest fixpoints")]
    Alternating,
    #[error("the flat state space exceeds the cap of {0} states")]
    ProductTooLarge(usize),
    #[error("the network has no components")]
    EmptyNetwork,
    #[error("simplification left a modality-free graph undecided")]
    Stuck,
    #[error(transparent)]
    Simplify(#[from] SimplifyError),
    #[error(transparent)]
    Graph(#[from] FgraphError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// How the next component to fold in is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Most synchronisation rules owned by the component alone whose action
    /// the graph still mentions behind a modality; ties go to the component
    /// with fewer states, then to the lower index.
    Smart,
    /// Lowest remaining index.
    Fixed,
    /// Highest remaining index. Exists so tests can cross different orders.
    Reverse,
}

/// One fold: the component taken, and the graph size (states, transitions)
/// right after the product and again after simplification.
#[derive(Clone, Debug)]
pub struct Step {
    pub component: String,
    pub after_quotient: (usize, usize),
    pub after_simplify: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub value: bool,
    pub steps: Vec<Step>,
    /// True when components were still unexplored at the time the graph
    /// became constant.
    pub stopped_early: bool,
}

/// Default bound on flat state spaces built by [`check_global`].
pub const DEFAULT_CAP: usize = 1_000_000;

fn dims(g: &FormulaGraph) -> (usize, usize) {
    (g.lts().state_count(), g.lts().transitions().len())
}

/// Resolves, expands, normalises and encodes the formula for the given
/// network alphabet. Alternating formulas are rejected: block labelling is
/// only meaningful without dependent mixed fixpoints.
pub fn prepare(n: &Network, f: &Formula) -> Result<FormulaGraph, EngineError> {
    let resolved = resolve_actions(f, &n.alphabet());
    let labelled = block_label(&to_disjunctive(&expand_regular(&resolved)));
    if !is_alternation_free(&labelled) {
        return Err(EngineError::Alternating);
    }
    Ok(encode(&labelled)?)
}

/// Picks the component to quotient next.
pub fn select_next(g: &FormulaGraph, n: &Network, policy: Policy) -> usize {
    assert!(n.size() > 0, "selection needs a component");
    match policy {
        Policy::Fixed => 0,
        Policy::Reverse => n.size() - 1,
        Policy::Smart => {
            let modal: BTreeSet<Label> = g
                .lts()
                .transitions()
                .iter()
                .filter_map(|t| match GLabel::parse(&t.1) {
                    Some(GLabel::Dia(a)) => Some(a),
                    _ => None,
                })
                .collect();
            (0..n.size())
                .max_by_key(|&i| {
                    let private = n
                        .rules()
                        .iter()
                        .filter(|r| r.is_exclusive(i) && modal.contains(r.result()))
                        .count();
                    (
                        private,
                        std::cmp::Reverse(n.component(i).state_count()),
                        std::cmp::Reverse(i),
                    )
                })
                .expect("nonempty network")
        }
    }
}

/// A modality whose action no remaining component can perform never fires,
/// so the edge denotes a false disjunct and can be dropped.
fn drop_modal_edges(g: &FormulaGraph) -> FormulaGraph {
    let lts = g.lts();
    let kept: Vec<Transition> = lts
        .transitions()
        .iter()
        .filter(|t| !matches!(GLabel::parse(&t.1), Some(GLabel::Dia(_))))
        .cloned()
        .collect();
    FormulaGraph::from_unchecked(
        Lts::new(lts.state_count(), lts.initial(), kept).expect("states unchanged"),
    )
}

fn verdict_value(v: GraphVerdict) -> Option<bool> {
    match v {
        GraphVerdict::Tt => Some(true),
        GraphVerdict::Ff => Some(false),
        GraphVerdict::Unresolved => None,
    }
}

/// Checks the formula at the initial state of the network product without
/// ever building the product: the formula graph is quotiented by one
/// component at a time and simplified in between, and the loop stops as
/// soon as the graph is constant.
pub fn check_partial(n: &Network, f: &Formula, policy: Policy) -> Result<Verdict, EngineError> {
    if n.size() == 0 {
        return Err(EngineError::EmptyNetwork);
    }
    let (mut g, _) = simplify_pipeline(&prepare(n, f)?)?;
    let mut net = n.clone();
    let mut steps = Vec::new();
    loop {
        if let Some(value) = verdict_value(constant_verdict(&g)) {
            return Ok(Verdict {
                value,
                steps,
                stopped_early: net.size() > 0,
            });
        }
        if net.size() == 0 {
            let (done, _) = simplify_pipeline(&drop_modal_edges(&g))?;
            let value = verdict_value(constant_verdict(&done)).ok_or(EngineError::Stuck)?;
            return Ok(Verdict {
                value,
                steps,
                stopped_early: false,
            });
        }
        let (i, quotiented, sub) = if net.size() == 1 {
            let qnet = fgraph::build_quotient_network(&g, &net, 0)?;
            let flat = network::product(&qnet);
            (0, FormulaGraph::from_unchecked(flat), Network::empty())
        } else {
            let i = select_next(&g, &net, policy);
            let (q, sub) = fgraph::quotient(&g, &net, i)?;
            (i, q, sub)
        };
        let component = net.name(i).to_string();
        let after_quotient = dims(&quotiented);
        let (simplified, _) = simplify_pipeline(&quotiented)?;
        g = simplified;
        steps.push(Step {
            component,
            after_quotient,
            after_simplify: dims(&g),
        });
        net = sub;
    }
}

/// Builds the flat product, bounded by `cap` states, and evaluates the
/// formula at its initial state directly.
pub fn check_global(n: &Network, f: &Formula, cap: usize) -> Result<bool, EngineError> {
    if n.size() == 0 {
        return Err(EngineError::EmptyNetwork);
    }
    let flat = network::product_capped(n, cap).ok_or(EngineError::ProductTooLarge(cap))?;
    let resolved = resolve_actions(f, &n.alphabet());
    let expanded = expand_regular(&resolved);
    if !is_alternation_free(&block_label(&to_disjunctive(&expanded))) {
        return Err(EngineError::Alternating);
    }
    Ok(eval::holds_at(&flat, flat.initial(), &expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mucalc::parse_formula;
    use crate::network::SyncRule;
    use crate::randgen::{random_formula, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lab(s: &str) -> Label {
        Label::new(s)
    }

    fn lts(states: usize, initial: usize, trans: &[(usize, &str, usize)]) -> Lts {
        Lts::new(
            states,
            initial,
            trans.iter().map(|(f, l, t)| (*f, lab(l), *t)).collect(),
        )
        .unwrap()
    }

    fn rule(v: &[Option<&str>], r: &str) -> SyncRule {
        SyncRule::new(v.iter().map(|e| e.map(lab)).collect(), lab(r))
    }

    /// Two cyclic processes around a binary semaphore. The processes never
    /// interact directly; requests and releases synchronise with the
    /// semaphore, the rest is private.
    fn semaphore() -> Network {
        let process = |i: usize| {
            lts(
                4,
                0,
                &[
                    (0, &format!("ncs{i}"), 1),
                    (1, &format!("req{i}"), 2),
                    (2, &format!("cs{i}"), 3),
                    (3, &format!("rel{i}"), 0),
                ]
                .iter()
                .map(|(f, l, t)| (*f, l.as_str(), *t))
                .collect::<Vec<_>>(),
            )
        };
        let sem = lts(
            3,
            0,
            &[(0, "req0", 1), (1, "rel0", 0), (0, "req1", 2), (2, "rel1", 0)],
        );
        Network::new(
            vec![process(0), sem, process(1)],
            vec!["p0".into(), "s".into(), "p1".into()],
            vec![
                rule(&[Some("req0"), Some("req0"), None], "req0"),
                rule(&[Some("rel0"), Some("rel0"), None], "rel0"),
                rule(&[None, Some("req1"), Some("req1")], "req1"),
                rule(&[None, Some("rel1"), Some("rel1")], "rel1"),
                rule(&[Some("ncs0"), None, None], "ncs0"),
                rule(&[Some("cs0"), None, None], "cs0"),
                rule(&[None, None, Some("ncs1")], "ncs1"),
                rule(&[None, None, Some("cs1")], "cs1"),
            ],
        )
    }

    /// After `ncs0`, some fair run keeps scheduling process 1 through its
    /// non-critical and critical sections without process 0 moving.
    const FAIRNESS: &str = r#"[ "ncs0" ] < (not("ncs0", "req0", "cs0", "rel0"))* . "ncs1" . (not("ncs0", "req0", "cs0", "rel0"))* . "cs1" > @"#;

    #[test]
    fn semaphore_fairness_stops_after_two_folds() {
        let n = semaphore();
        let f = parse_formula(FAIRNESS).unwrap();
        let v = check_partial(&n, &f, Policy::Smart).unwrap();
        assert!(v.value);
        assert!(v.stopped_early, "p0 should never be folded in");
        let order: Vec<&str> = v.steps.iter().map(|s| s.component.as_str()).collect();
        assert_eq!(order, ["p1", "s"]);
        assert!(v.steps[1].after_simplify.0 <= v.steps[0].after_simplify.0);
        assert_eq!(check_global(&n, &f, DEFAULT_CAP).unwrap(), true);
    }

    #[test]
    fn semaphore_verdict_is_policy_independent() {
        let n = semaphore();
        let f = parse_formula(FAIRNESS).unwrap();
        for policy in [Policy::Smart, Policy::Fixed, Policy::Reverse] {
            assert!(check_partial(&n, &f, policy).unwrap().value);
        }
    }

    #[test]
    fn constant_formulas_skip_every_component() {
        let n = semaphore();
        let f = parse_formula("true").unwrap();
        let v = check_partial(&n, &f, Policy::Smart).unwrap();
        assert!(v.value);
        assert!(v.steps.is_empty());
        assert!(v.stopped_early);
        let v = check_partial(&n, &parse_formula("false").unwrap(), Policy::Fixed).unwrap();
        assert!(!v.value);
    }

    #[test]
    fn a_deadlocked_component_refutes_a_diamond() {
        let n = Network::new(
            vec![lts(1, 0, &[])],
            vec!["dead".into()],
            vec![rule(&[Some("a")], "a")],
        );
        let f = parse_formula(r#"< "a" > true"#).unwrap();
        let v = check_partial(&n, &f, Policy::Smart).unwrap();
        assert!(!v.value);
        assert!(!v.stopped_early);
        assert_eq!(v.steps.len(), 1);
        assert_eq!(check_global(&n, &f, DEFAULT_CAP).unwrap(), false);
    }

    #[test]
    fn single_component_networks_agree_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51e0);
        let labels: Vec<Label> = ["a", "b"].iter().map(|l| lab(l)).collect();
        for _ in 0..80 {
            let c = crate::randgen::random_lts(&mut rng, &labels, 5);
            let n = Network::new(
                vec![c],
                vec!["c".into()],
                vec![rule(&[Some("a")], "a"), rule(&[Some("b")], "b")],
            );
            let f = random_formula(&mut rng, &labels, 3);
            let partial = check_partial(&n, &f, Policy::Smart).unwrap();
            let global = check_global(&n, &f, DEFAULT_CAP).unwrap();
            assert_eq!(partial.value, global, "formula {f:?}");
        }
    }

    #[test]
    fn partial_and_global_agree_on_random_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xace5);
        let labels: Vec<Label> = ["a", "b", "c"].iter().map(|l| lab(l)).collect();
        for round in 0..200 {
            let n = random_network(&mut rng, 3, 4, 6);
            let f = random_formula(&mut rng, &labels, 3);
            let global = check_global(&n, &f, DEFAULT_CAP).unwrap();
            let policy = if round % 2 == 0 { Policy::Smart } else { Policy::Fixed };
            let partial = check_partial(&n, &f, policy).unwrap();
            assert_eq!(partial.value, global, "round {round}, formula {f:?}");
        }
    }

    #[test]
    fn policies_never_disagree_on_the_verdict() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x90ab);
        let labels: Vec<Label> = ["a", "b", "c"].iter().map(|l| lab(l)).collect();
        for _ in 0..60 {
            let n = random_network(&mut rng, 3, 3, 5);
            let f = random_formula(&mut rng, &labels, 2);
            let values: Vec<bool> = [Policy::Smart, Policy::Fixed, Policy::Reverse]
                .iter()
                .map(|p| check_partial(&n, &f, *p).unwrap().value)
                .collect();
            assert!(values.windows(2).all(|w| w[0] == w[1]), "{values:?}");
        }
    }

    #[test]
    fn selection_prefers_sole_owners_of_mentioned_actions() {
        let c0 = lts(2, 0, &[(0, "a", 1)]);
        let c1 = lts(1, 0, &[]);
        let n = Network::new(
            vec![c0.clone(), c1.clone()],
            vec!["c0".into(), "c1".into()],
            vec![rule(&[Some("a"), None], "a")],
        );
        let f = parse_formula(r#"< "a" > true"#).unwrap();
        let g = prepare(&n, &f).unwrap();
        assert_eq!(select_next(&g, &n, Policy::Smart), 0);

        // Symmetric ownership: the tie goes to the smaller component.
        let n = Network::new(
            vec![c0, c1],
            vec!["c0".into(), "c1".into()],
            vec![rule(&[Some("a"), None], "a"), rule(&[None, Some("a")], "a")],
        );
        assert_eq!(select_next(&g, &n, Policy::Smart), 1);
        assert_eq!(select_next(&g, &n, Policy::Fixed), 0);
        assert_eq!(select_next(&g, &n, Policy::Reverse), 1);
    }

    #[test]
    fn selection_breaks_full_ties_towards_the_lower_index() {
        let c = lts(2, 0, &[(0, "a", 1)]);
        let n = Network::new(
            vec![c.clone(), c],
            vec!["c0".into(), "c1".into()],
            vec![rule(&[Some("a"), None], "a"), rule(&[None, Some("a")], "a")],
        );
        let f = parse_formula(r#"< "a" > true"#).unwrap();
        let g = prepare(&n, &f).unwrap();
        assert_eq!(select_next(&g, &n, Policy::Smart), 0);
    }

    #[test]
    fn globally_reachable_actions_satisfy_fair_reachability() {
        let c = lts(2, 0, &[(0, "b", 1), (1, "a", 0)]);
        let n = Network::new(
            vec![c],
            vec!["c".into()],
            vec![rule(&[Some("a")], "a"), rule(&[Some("b")], "b")],
        );
        let f = parse_formula(
            r#"nu X . ((mu Y . ((< "a" > true) or < any > Y)) and [ not("a") ] X)"#,
        )
        .unwrap();
        assert!(check_global(&n, &f, DEFAULT_CAP).unwrap());
        assert!(check_partial(&n, &f, Policy::Smart).unwrap().value);

        let c = lts(2, 0, &[(0, "b", 1)]);
        let n = Network::new(
            vec![c],
            vec!["c".into()],
            vec![rule(&[Some("a")], "a"), rule(&[Some("b")], "b")],
        );
        assert!(!check_global(&n, &f, DEFAULT_CAP).unwrap());
        assert!(!check_partial(&n, &f, Policy::Smart).unwrap().value);
    }

    #[test]
    fn alternating_formulas_are_rejected() {
        let n = semaphore();
        let f = parse_formula(r#"nu X . mu Y . ((< "req0" > Y) or X)"#).unwrap();
        assert!(matches!(
            check_partial(&n, &f, Policy::Smart),
            Err(EngineError::Alternating)
        ));
        assert!(matches!(
            check_global(&n, &f, DEFAULT_CAP),
            Err(EngineError::Alternating)
        ));
    }

    #[test]
    fn the_flat_route_respects_the_state_cap() {
        let n = semaphore();
        let f = parse_formula("true").unwrap();
        assert!(matches!(
            check_global(&n, &f, 10),
            Err(EngineError::ProductTooLarge(10))
        ));
    }

    #[test]
    fn empty_networks_are_rejected() {
        let f = parse_formula("true").unwrap();
        assert!(matches!(
            check_partial(&Network::empty(), &f, Policy::Smart),
            Err(EngineError::EmptyNetwork)
        ));
        assert!(matches!(
            check_global(&Network::empty(), &f, DEFAULT_CAP),
            Err(EngineError::EmptyNetwork)
        ));
    }

    #[test]
    fn unmatchable_modalities_drop_to_deadlocks() {
        let sigma: BTreeSet<Label> = [lab("a")].into_iter().collect();
        let f = resolve_actions(&parse_formula(r#"< "a" > true"#).unwrap(), &sigma);
        let g = encode(&block_label(&to_disjunctive(&expand_regular(&f)))).unwrap();
        let bare = drop_modal_edges(&g);
        let (done, _) = simplify_pipeline(&bare).unwrap();
        assert_eq!(constant_verdict(&done), GraphVerdict::Ff);
    }

    #[test]
    fn fold_sizes_shrink_on_the_semaphore() {
        let n = semaphore();
        let f = parse_formula(FAIRNESS).unwrap();
        let v = check_partial(&n, &f, Policy::Smart).unwrap();
        for s in &v.steps {
            assert!(s.after_simplify.0 <= s.after_quotient.0 + 1, "{s:?}");
        }
    }
}
