//! Formula graphs: disjunctive block-labelled formulas encoded as LTSs
//! over a reserved label vocabulary, the decoder used as a test oracle,
//! the graph well-formedness checker, and the two-component network whose
//! synchronous product quotients a graph against one network component.

use crate::lts::{Label, Lts, Transition};
use crate::mucalc::{ActionFormula, Formula};
use crate::network::{extract_subnetwork, product, NetError, Network, SyncRule};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use thiserror::Error;

/// Parsed form of a reserved graph label: disjunction, negation, a
/// modality over one concrete action, or a fixpoint edge carrying its
/// block number, optionally marked as standing for a kept-least greatest
/// fixpoint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GLabel {
    Or,
    Not,
    Dia(Label),
    Mu(u32),
    MuMarked(u32),
}

impl GLabel {
    pub fn parse(l: &Label) -> Option<GLabel> {
        let t = l.text();
        if t == "%or" {
            return Some(GLabel::Or);
        }
        if t == "%not" {
            return Some(GLabel::Not);
        }
        if let Some(rest) = t.strip_prefix("%dia.") {
            if rest.is_empty() || rest == "-" {
                return None;
            }
            return Some(GLabel::Dia(Label::new(rest)));
        }
        if let Some(rest) = t.strip_prefix("%mu@.") {
            return rest.parse::<u32>().ok().map(GLabel::MuMarked);
        }
        if let Some(rest) = t.strip_prefix("%mu.") {
            return rest.parse::<u32>().ok().map(GLabel::Mu);
        }
        None
    }

    pub fn label(&self) -> Label {
        match self {
            GLabel::Or => Label::new("%or"),
            GLabel::Not => Label::new("%not"),
            GLabel::Dia(l) => Label::new(format!("%dia.{}", l.text())),
            GLabel::Mu(k) => Label::new(format!("%mu.{k}")),
            GLabel::MuMarked(k) => Label::new(format!("%mu@.{k}")),
        }
    }

    /// Both plain and marked fixpoint edges count as µ-transitions.
    pub fn is_mu(&self) -> bool {
        matches!(self, GLabel::Mu(_) | GLabel::MuMarked(_))
    }

    pub fn block(&self) -> Option<u32> {
        match self {
            GLabel::Mu(k) | GLabel::MuMarked(k) => Some(*k),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FgraphError {
    #[error("formula is not in disjunctive form")]
    NotDisjunctive,
    #[error("formula is not block-labelled")]
    NotLabelled,
    #[error("malformed formula graph: {0}")]
    Malformed(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// An LTS whose labels all have the reserved forms and that satisfies the
/// path and circuit conditions checked by [`check_formula_graph`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormulaGraph {
    lts: Lts,
}

impl FormulaGraph {
    pub fn new(lts: Lts) -> Result<FormulaGraph, FgraphError> {
        let violations = check_formula_graph(&lts);
        if violations.is_empty() {
            Ok(FormulaGraph { lts })
        } else {
            Err(FgraphError::Malformed(violations.join("; ")))
        }
    }

    /// For graphs produced by operations that preserve validity; tests
    /// re-check them explicitly.
    pub fn from_unchecked(lts: Lts) -> FormulaGraph {
        FormulaGraph { lts }
    }

    pub fn lts(&self) -> &Lts {
        &self.lts
    }

    pub fn into_lts(self) -> Lts {
        self.lts
    }
}

fn is_labelled(f: &Formula) -> bool {
    match f {
        Formula::False => true,
        Formula::Var { block, .. } => block.is_some(),
        Formula::Not(g) | Formula::Dia(_, g) => is_labelled(g),
        Formula::Or(a, b) => is_labelled(a) && is_labelled(b),
        Formula::Mu { block, body, .. } => block.is_some() && is_labelled(body),
        _ => false,
    }
}

/// Encodes a closed disjunctive block-labelled formula, one state per
/// structurally distinct subformula, states numbered in first-visit order
/// from the root. Transitions: a disjunction steps `%or` to each operand,
/// a negation `%not` to its operand, a modality `%dia.<a>` to its operand,
/// a binder `%mu.<k>` (or `%mu@.<k>` when marked) to its body, and a
/// variable occurrence steps `%or` back to its binder's state.
pub fn encode(f: &Formula) -> Result<FormulaGraph, FgraphError> {
    if !crate::mucalc::is_disjunctive(f) {
        return Err(FgraphError::NotDisjunctive);
    }
    if !is_labelled(f) {
        return Err(FgraphError::NotLabelled);
    }
    struct Enc {
        share: HashMap<Formula, usize>,
        binders: HashMap<String, usize>,
        transitions: Vec<Transition>,
        count: usize,
    }
    fn go(f: &Formula, enc: &mut Enc) -> usize {
        if let Some(&id) = enc.share.get(f) {
            return id;
        }
        let id = enc.count;
        enc.count += 1;
        enc.share.insert(f.clone(), id);
        match f {
            Formula::False => {}
            Formula::Var { name, .. } => {
                let binder = *enc
                    .binders
                    .get(name)
                    .unwrap_or_else(|| panic!("unbound variable {name}"));
                enc.transitions.push((id, GLabel::Or.label(), binder));
            }
            Formula::Not(g) => {
                let t = go(g, enc);
                enc.transitions.push((id, GLabel::Not.label(), t));
            }
            Formula::Or(a, b) => {
                let ta = go(a, enc);
                enc.transitions.push((id, GLabel::Or.label(), ta));
                let tb = go(b, enc);
                enc.transitions.push((id, GLabel::Or.label(), tb));
            }
            Formula::Dia(a, g) => {
                let l = match a {
                    ActionFormula::One(l) => l.clone(),
                    _ => unreachable!("disjunctive form has single-label modalities"),
                };
                let t = go(g, enc);
                enc.transitions.push((id, GLabel::Dia(l).label(), t));
            }
            Formula::Mu { name, block, marked, body } => {
                let k = block.expect("labelled");
                enc.binders.insert(name.clone(), id);
                let t = go(body, enc);
                enc.binders.remove(name);
                let glabel = if *marked {
                    GLabel::MuMarked(k)
                } else {
                    GLabel::Mu(k)
                };
                enc.transitions.push((id, glabel.label(), t));
            }
            _ => unreachable!("checked disjunctive"),
        }
        id
    }
    let mut enc = Enc {
        share: HashMap::new(),
        binders: HashMap::new(),
        transitions: Vec::new(),
        count: 0,
    };
    let root = go(f, &mut enc);
    debug_assert_eq!(root, 0);
    let lts = Lts::new(enc.count, root, enc.transitions).expect("in-range transitions");
    debug_assert!(check_formula_graph(&lts).is_empty());
    Ok(FormulaGraph { lts })
}

/// Decodes a graph back into a formula: a state is the disjunction of its
/// transitions' decodings (a deadlock state is ff), and a fixpoint edge
/// whose source was already traversed on the current path becomes a
/// variable occurrence naming that source.
pub fn decode(g: &FormulaGraph) -> Result<Formula, FgraphError> {
    fn dec_s(lts: &Lts, s: usize, visiting: &mut BTreeSet<usize>) -> Result<Formula, FgraphError> {
        let mut parts = Vec::new();
        for (src, l, t) in lts.outgoing(s) {
            let glabel = GLabel::parse(l)
                .ok_or_else(|| FgraphError::Malformed(format!("invalid label {l} at state {src}")))?;
            parts.push(dec_t(lts, s, &glabel, *t, visiting)?);
        }
        let mut out = match parts.pop() {
            None => Formula::False,
            Some(last) => last,
        };
        while let Some(part) = parts.pop() {
            out = Formula::or(part, out);
        }
        Ok(out)
    }
    fn dec_t(
        lts: &Lts,
        s: usize,
        glabel: &GLabel,
        t: usize,
        visiting: &mut BTreeSet<usize>,
    ) -> Result<Formula, FgraphError> {
        Ok(match glabel {
            GLabel::Or => dec_s(lts, t, visiting)?,
            GLabel::Not => Formula::not(dec_s(lts, t, visiting)?),
            GLabel::Dia(a) => Formula::dia(ActionFormula::One(a.clone()), dec_s(lts, t, visiting)?),
            GLabel::Mu(k) | GLabel::MuMarked(k) => {
                let marked = matches!(glabel, GLabel::MuMarked(_));
                let name = format!("S{s}");
                if visiting.contains(&s) {
                    Formula::Var {
                        name,
                        block: Some(*k),
                        marked,
                    }
                } else {
                    visiting.insert(s);
                    let body = dec_s(lts, t, visiting)?;
                    visiting.remove(&s);
                    Formula::Mu {
                        name,
                        block: Some(*k),
                        marked,
                        body: Box::new(body),
                    }
                }
            }
        })
    }
    dec_s(g.lts(), g.lts().initial(), &mut BTreeSet::new())
}

/// Component ids per state, numbered in reverse topological order of the
/// condensation (a component's id is larger than those it can reach).
pub(crate) fn strongly_connected_components(
    state_count: usize,
    edges: &[(usize, usize)],
) -> Vec<usize> {
    let mut adj = vec![Vec::new(); state_count];
    for (u, v) in edges {
        adj[*u].push(*v);
    }
    let mut index = vec![usize::MAX; state_count];
    let mut low = vec![0usize; state_count];
    let mut on_stack = vec![false; state_count];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; state_count];
    let mut next_index = 0;
    let mut next_comp = 0;
    // Iterative Tarjan: frames hold (node, next child position).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for start in 0..state_count {
        if index[start] != usize::MAX {
            continue;
        }
        frames.push((start, 0));
        while let Some(&mut (v, ref mut ci)) = frames.last_mut() {
            if *ci == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ci < adj[v].len() {
                let w = adj[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&mut (parent, _)) = frames.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("non-empty Tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Validates the three graph conditions on the reachable part: reserved
/// label forms only; the block parity of every plain fixpoint edge equals
/// the negation parity of every path reaching it; every circuit contains a
/// fixpoint edge, and plain fixpoint edges sharing a strongly connected
/// component agree on their block. Returns human-readable violations.
pub fn check_formula_graph(lts: &Lts) -> Vec<String> {
    let mut violations = Vec::new();
    let reach = lts.reachable();
    let mut bad_labels: BTreeSet<String> = BTreeSet::new();
    let mut edges: Vec<(usize, GLabel, usize)> = Vec::new();
    for (s, l, t) in lts.transitions() {
        if !reach[*s] {
            continue;
        }
        match GLabel::parse(l) {
            Some(g) => edges.push((*s, g, *t)),
            None => {
                bad_labels.insert(format!(
                    "condition 1: invalid label {l} on a transition from state {s}"
                ));
            }
        }
    }
    violations.extend(bad_labels);
    if !violations.is_empty() {
        return violations;
    }

    // Condition 2: explore (state, negation parity) pairs.
    let n = lts.state_count();
    let mut out: Vec<Vec<(GLabel, usize)>> = vec![Vec::new(); n];
    for (s, g, t) in &edges {
        out[*s].push((g.clone(), *t));
    }
    let mut seen = vec![false; 2 * n];
    let mut queue = VecDeque::new();
    seen[2 * lts.initial()] = true;
    queue.push_back((lts.initial(), true));
    let mut parity_violations = BTreeSet::new();
    while let Some((s, even)) = queue.pop_front() {
        for (g, t) in &out[s] {
            if let GLabel::Mu(k) = g {
                if (*k % 2 == 0) != even {
                    parity_violations.insert(format!(
                        "condition 2: %mu.{k} from state {s} is reachable with an {} number of %not labels",
                        if even { "even" } else { "odd" }
                    ));
                }
            }
            let next_even = if matches!(g, GLabel::Not) { !even } else { even };
            let slot = 2 * t + usize::from(!next_even);
            if !seen[slot] {
                seen[slot] = true;
                queue.push_back((*t, next_even));
            }
        }
    }
    violations.extend(parity_violations);

    // Condition 3a: the subgraph without fixpoint edges must be acyclic.
    let mut color = vec![0u8; n];
    let mut cycle_state = None;
    for start in 0..n {
        if !reach[start] || color[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = 1;
        while let Some(&mut (v, ref mut ci)) = stack.last_mut() {
            let next = out[v]
                .iter()
                .skip(*ci)
                .position(|(g, _)| !g.is_mu())
                .map(|p| *ci + p);
            match next {
                Some(pos) => {
                    *ci = pos + 1;
                    let w = out[v][pos].1;
                    if color[w] == 1 {
                        cycle_state = cycle_state.or(Some(w));
                    } else if color[w] == 0 {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                }
                None => {
                    color[v] = 2;
                    stack.pop();
                }
            }
        }
    }
    if let Some(w) = cycle_state {
        violations.push(format!(
            "condition 3: a circuit through state {w} has no %mu edge"
        ));
    }

    // Condition 3b: plain fixpoint blocks are uniform per strongly
    // connected component (marked edges are exempt).
    let plain_edges: Vec<(usize, usize)> = edges.iter().map(|(s, _, t)| (*s, *t)).collect();
    let comp = strongly_connected_components(n, &plain_edges);
    let mut blocks: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for (s, g, t) in &edges {
        if comp[*s] == comp[*t] {
            if let GLabel::Mu(k) = g {
                blocks.entry(comp[*s]).or_default().insert(*k);
            }
        }
    }
    for (c, ks) in blocks {
        if ks.len() > 1 {
            let witness = edges
                .iter()
                .find(|(s, g, t)| comp[*s] == c && comp[*t] == c && matches!(g, GLabel::Mu(_)))
                .map(|(s, _, _)| *s)
                .unwrap_or(0);
            violations.push(format!(
                "condition 3: circuits through state {witness} mix %mu blocks {ks:?}"
            ));
        }
    }
    violations
}

/// The 2-component network (graph, chosen component) whose product is the
/// quotient graph. Logical labels pass through untouched; a modal label
/// synchronises with the component per the rules that produce its action:
/// the modality survives when the component is not involved, turns into a
/// fresh interaction modality when the action is shared with others, and
/// dissolves into a disjunction edge when the action was exclusive to the
/// component.
pub fn build_quotient_network(
    g: &FormulaGraph,
    n: &Network,
    i: usize,
) -> Result<Network, NetError> {
    if i >= n.size() {
        return Err(NetError::BadIndex {
            index: i,
            size: n.size(),
        });
    }
    let mut modal: BTreeSet<Label> = BTreeSet::new();
    let mut mu_labels: BTreeSet<(u32, bool)> = BTreeSet::new();
    for (_, l, _) in g.lts().transitions() {
        match GLabel::parse(l) {
            Some(GLabel::Dia(a)) => {
                modal.insert(a);
            }
            Some(GLabel::Mu(k)) => {
                mu_labels.insert((k, false));
            }
            Some(GLabel::MuMarked(k)) => {
                mu_labels.insert((k, true));
            }
            _ => {}
        }
    }
    let mut rules = Vec::new();
    let pass = |l: Label, rules: &mut Vec<SyncRule>| {
        rules.push(SyncRule::new(vec![Some(l.clone()), None], l));
    };
    pass(GLabel::Not.label(), &mut rules);
    pass(GLabel::Or.label(), &mut rules);
    for (k, marked) in &mu_labels {
        let l = if *marked {
            GLabel::MuMarked(*k).label()
        } else {
            GLabel::Mu(*k).label()
        };
        pass(l, &mut rules);
    }
    for (idx, rule) in n.rules().iter().enumerate() {
        let a = rule.result();
        if !modal.contains(a) {
            continue;
        }
        let dia = GLabel::Dia(a.clone()).label();
        if !rule.is_active(i) {
            rules.push(SyncRule::new(vec![Some(dia.clone()), None], dia));
        } else if rule.is_exclusive(i) {
            rules.push(SyncRule::new(
                vec![Some(dia), rule.vector()[i].clone()],
                GLabel::Or.label(),
            ));
        } else {
            let alpha = n.alpha_label(idx);
            rules.push(SyncRule::new(
                vec![Some(dia), rule.vector()[i].clone()],
                GLabel::Dia(alpha).label(),
            ));
        }
    }
    Ok(Network::new(
        vec![g.lts().clone(), n.component(i).clone()],
        vec!["formula-graph".into(), n.name(i).to_string()],
        rules,
    ))
}

/// Quotients the graph by component `i`: the reachable product of the
/// quotient network, paired with the environment network the new graph
/// must be checked against.
pub fn quotient(
    g: &FormulaGraph,
    n: &Network,
    i: usize,
) -> Result<(FormulaGraph, Network), FgraphError> {
    let qnet = build_quotient_network(g, n, i)?;
    let quotiented = product(&qnet);
    let (sub, _interface) = extract_subnetwork(n, i)?;
    Ok((FormulaGraph::from_unchecked(quotiented), sub))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::is_strongly_bisimilar;
    use crate::mucalc::{
        block_label, parse_formula, resolve_actions, semantically_equal, to_disjunctive,
    };
    use crate::randgen::{random_formula, random_lts};
    use rand::{Rng, SeedableRng};
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

    fn prepared(text: &str, alphabet: &[&str]) -> Formula {
        let sigma = alphabet.iter().map(|l| lab(l)).collect();
        let f = parse_formula(text).unwrap();
        let f = resolve_actions(&f, &sigma);
        let f = crate::mucalc::expand_regular(&f);
        block_label(&to_disjunctive(&f))
    }

    /// The three-process network with one private, two shared, one hidden,
    /// and one exclusive action.
    fn example_network() -> Network {
        let p1 = lts(3, 0, &[(0, "a", 1), (1, "b", 2), (2, "c", 0)]);
        let p2 = p1.clone();
        let p3 = lts(3, 0, &[(0, "a", 1), (0, "b", 2), (2, "d", 0)]);
        let rule = |v: &[Option<&str>], r: &str| {
            SyncRule::new(v.iter().map(|e| e.map(lab)).collect(), lab(r))
        };
        Network::new(
            vec![p1, p2, p3],
            vec!["p1.aut".into(), "p2.aut".into(), "p3.aut".into()],
            vec![
                rule(&[Some("a"), Some("a"), None], "a"),
                rule(&[Some("a"), None, Some("a")], "a"),
                rule(&[Some("b"), Some("b"), Some("b")], "b"),
                rule(&[Some("c"), Some("c"), None], "tau"),
                rule(&[None, None, Some("d")], "d"),
            ],
        )
    }

    #[test]
    fn encoding_matches_reference_shape() {
        let f = prepared("mu X . <\"a\"> true or <\"b\"> X", &["a", "b"]);
        let g = encode(&f).unwrap();
        assert_eq!(g.lts().state_count(), 7);
        assert_eq!(g.lts().initial(), 0);
        let expected = vec![
            (0, lab("%mu.0"), 1),
            (1, lab("%or"), 2),
            (1, lab("%or"), 5),
            (2, lab("%dia.a"), 3),
            (3, lab("%not"), 4),
            (5, lab("%dia.b"), 6),
            (6, lab("%or"), 0),
        ];
        assert_eq!(g.lts().transitions(), expected.as_slice());
    }

    #[test]
    fn encoding_constants_and_sharing() {
        let ff = encode(&prepared("false", &[])).unwrap();
        assert_eq!(ff.lts().state_count(), 1);
        assert!(ff.lts().transitions().is_empty());

        // Both disjuncts are the same subterm and share their states.
        let f = prepared("mu X . <\"a\"> X or <\"a\"> X", &["a"]);
        let g = encode(&f).unwrap();
        assert_eq!(g.lts().state_count(), 4);
        assert_eq!(
            g.lts().transitions(),
            [
                (0, lab("%mu.0"), 1),
                (1, lab("%or"), 2),
                (2, lab("%dia.a"), 3),
                (3, lab("%or"), 0),
            ]
            .as_slice()
        );
    }

    #[test]
    fn encode_rejects_unprepared_input() {
        let raw = parse_formula("mu X . [\"a\"] X").unwrap();
        assert!(matches!(encode(&raw), Err(FgraphError::NotDisjunctive)));
        let unlabelled = to_disjunctive(&raw);
        assert!(matches!(
            encode(&unlabelled),
            Err(FgraphError::NotLabelled)
        ));
    }

    #[test]
    fn encoded_random_formulas_pass_validation() {
        let labels = [lab("a"), lab("b")];
        let sigma = labels.iter().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..150 {
            let f = random_formula(&mut rng, &labels, 4);
            let d = block_label(&to_disjunctive(&resolve_actions(&f, &sigma)));
            let g = encode(&d).unwrap();
            assert_eq!(check_formula_graph(g.lts()), Vec::<String>::new(), "{f:?}");
        }
    }

    #[test]
    fn validation_catches_broken_graphs() {
        // A %or-only cycle: no fixpoint edge on the circuit.
        let orloop = lts(2, 0, &[(0, "%or", 1), (1, "%or", 0)]);
        let v = check_formula_graph(&orloop);
        assert!(v.iter().any(|m| m.contains("condition 3")), "{v:?}");

        // %mu.1 reachable with zero negations.
        let parity = lts(2, 0, &[(0, "%mu.1", 1)]);
        let v = check_formula_graph(&parity);
        assert!(v.iter().any(|m| m.contains("condition 2")), "{v:?}");

        // Even block behind one negation.
        let parity2 = lts(3, 0, &[(0, "%not", 1), (1, "%mu.0", 2)]);
        let v = check_formula_graph(&parity2);
        assert!(v.iter().any(|m| m.contains("condition 2")), "{v:?}");

        // Marked fixpoint edges are exempt from the parity condition.
        let marked = lts(3, 0, &[(0, "%not", 1), (1, "%mu@.0", 2)]);
        assert_eq!(check_formula_graph(&marked), Vec::<String>::new());

        // Unknown label forms.
        let bad = lts(2, 0, &[(0, "status", 1)]);
        let v = check_formula_graph(&bad);
        assert!(v.iter().any(|m| m.contains("condition 1")), "{v:?}");
        let bad_mu = lts(2, 0, &[(0, "%mu.x", 1)]);
        assert!(!check_formula_graph(&bad_mu).is_empty());

        // Two blocks on one circuit.
        let mixed = lts(
            2,
            0,
            &[(0, "%mu.0", 1), (1, "%mu.2", 0)],
        );
        let v = check_formula_graph(&mixed);
        assert!(v.iter().any(|m| m.contains("mix")), "{v:?}");

        // Violations beyond the initial state's reach are ignored.
        let unreachable = lts(3, 0, &[(0, "%or", 1), (2, "bogus", 2)]);
        assert_eq!(check_formula_graph(&unreachable), Vec::<String>::new());
    }

    #[test]
    fn decoding_reference_graphs() {
        let ff = FormulaGraph::new(lts(1, 0, &[])).unwrap();
        assert_eq!(decode(&ff).unwrap(), Formula::False);

        let f = prepared("mu X . <\"a\"> true or <\"b\"> X", &["a", "b"]);
        let g = encode(&f).unwrap();
        let back = decode(&g).unwrap();
        match &back {
            Formula::Mu { body, block: Some(0), marked: false, .. } => match body.as_ref() {
                Formula::Or(left, right) => {
                    assert!(matches!(left.as_ref(), Formula::Dia(_, _)));
                    assert!(matches!(right.as_ref(), Formula::Dia(_, _)));
                }
                other => panic!("expected a disjunction, got {other:?}"),
            },
            other => panic!("expected a fixpoint, got {other:?}"),
        }
        assert!(semantically_equal(&back, &f, 40));
    }

    #[test]
    fn decode_inverts_encode_semantically() {
        let labels = [lab("a"), lab("b")];
        let sigma = labels.iter().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..40 {
            let f = random_formula(&mut rng, &labels, 4);
            let d = block_label(&to_disjunctive(&resolve_actions(&f, &sigma)));
            let g = encode(&d).unwrap();
            let back = decode(&g).unwrap();
            assert!(semantically_equal(&back, &d, 25), "{f:?}");
        }
    }

    #[test]
    fn graphs_round_trip_through_aut_files() {
        let f = prepared("mu X . <\"a\"> true or <\"b\"> X", &["a", "b"]);
        let g = encode(&f).unwrap();
        let text = crate::lts::write_aut(g.lts());
        let back = crate::lts::parse_aut(&text).unwrap();
        assert_eq!(&back, g.lts());
    }

    #[test]
    fn quotient_network_rules_match_reference_listing() {
        let n = example_network();
        let f = prepared("mu X . <\"a\"> true or <\"b\"> X", &["a", "b"]);
        let g = encode(&f).unwrap();
        let qnet = build_quotient_network(&g, &n, 2).unwrap();
        let rule = |v: &[Option<&str>], r: &str| {
            SyncRule::new(v.iter().map(|e| e.map(lab)).collect(), lab(r))
        };
        assert_eq!(
            qnet.rules(),
            &[
                rule(&[Some("%not"), None], "%not"),
                rule(&[Some("%or"), None], "%or"),
                rule(&[Some("%mu.0"), None], "%mu.0"),
                rule(&[Some("%dia.a"), None], "%dia.a"),
                rule(&[Some("%dia.a"), Some("a")], "%dia.%sync.1.a"),
                rule(&[Some("%dia.b"), Some("b")], "%dia.%sync.2.b"),
            ]
        );
        assert_eq!(qnet.size(), 2);
        assert_eq!(qnet.component(0), g.lts());
        assert_eq!(qnet.component(1), n.component(2));
    }

    #[test]
    fn quotient_by_uninvolved_component_is_passthrough() {
        let n = {
            let p1 = lts(2, 0, &[(0, "a", 1), (1, "a", 0)]);
            let p2 = lts(1, 0, &[(0, "x", 0)]);
            Network::new(
                vec![p1, p2],
                vec!["p1".into(), "p2".into()],
                vec![SyncRule::new(vec![Some(lab("a")), None], lab("a"))],
            )
        };
        let f = prepared("mu X . <\"a\"> true or <\"a\"> X", &["a"]);
        let g = encode(&f).unwrap();
        let (q, sub) = quotient(&g, &n, 1).unwrap();
        assert!(is_strongly_bisimilar(q.lts(), g.lts()));
        assert_eq!(sub.size(), 1);
    }

    #[test]
    fn quotient_by_stuttering_component_renames_modalities() {
        // A single-state component that can always participate: the graph
        // keeps its structure, with shared modalities renamed.
        let p1 = lts(2, 0, &[(0, "a", 1), (1, "b", 0)]);
        let stutter = lts(1, 0, &[(0, "s", 0)]);
        let n = Network::new(
            vec![p1, stutter],
            vec!["p1".into(), "st".into()],
            vec![
                SyncRule::new(vec![Some(lab("a")), Some(lab("s"))], lab("a")),
                SyncRule::new(vec![Some(lab("b")), Some(lab("s"))], lab("b")),
            ],
        );
        let f = prepared("mu X . <\"a\"> true or <\"b\"> X", &["a", "b"]);
        let g = encode(&f).unwrap();
        let (q, _) = quotient(&g, &n, 1).unwrap();
        let renamed: Vec<_> = g
            .lts()
            .transitions()
            .iter()
            .map(|(s, l, t)| {
                let nl = match l.text() {
                    "%dia.a" => lab("%dia.%sync.0.a"),
                    "%dia.b" => lab("%dia.%sync.1.b"),
                    _ => l.clone(),
                };
                (*s, nl, *t)
            })
            .collect();
        let expected = Lts::new(g.lts().state_count(), 0, renamed).unwrap();
        assert!(is_strongly_bisimilar(q.lts(), &expected));
    }

    /// Quotienting a reachability loop by the third component and
    /// simplifying leaves a plain disjunction over the environment: the
    /// surviving modality, plus one interaction modality per shared rule
    /// the component can join in its initial region.
    #[test]
    fn simplified_quotient_decodes_to_the_interface_disjunction() {
        use crate::simplify::simplify_pipeline;
        let n = example_network();
        let f = prepared("mu X . (< \"a\" > true) or < \"b\" > X", &["a", "b", "tau", "d"]);
        let g = encode(&f).unwrap();
        let (q, _) = quotient(&g, &n, 2).unwrap();
        let (simplified, _) = simplify_pipeline(&q).unwrap();
        let back = decode(&simplified).unwrap();
        let expected = parse_formula(
            "(< \"a\" > true) or ((< \"%sync.1.a\" > true) or < \"%sync.2.b\" > < \"a\" > true)",
        )
        .unwrap();
        assert!(
            semantically_equal(&back, &expected, 30),
            "decoded to {back:?}"
        );
    }

    #[test]
    fn quotient_output_is_a_valid_formula_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let labels = [lab("a"), lab("b")];
        for round in 0..60 {
            let p1 = random_lts(&mut rng, &labels, 4);
            let p2 = random_lts(&mut rng, &labels, 4);
            let n = Network::new(
                vec![p1, p2],
                vec!["p1".into(), "p2".into()],
                vec![
                    SyncRule::new(vec![Some(lab("a")), Some(lab("a"))], lab("a")),
                    SyncRule::new(vec![Some(lab("b")), None], lab("b")),
                    SyncRule::new(vec![None, Some(lab("b"))], lab("c")),
                ],
            );
            let f = random_formula(&mut rng, &[lab("a"), lab("b"), lab("c")], 4);
            let d = block_label(&to_disjunctive(&resolve_actions(&f, &n.alphabet())));
            let g = encode(&d).unwrap();
            let i = rng.gen_range(0..2);
            let (q, _) = quotient(&g, &n, i).unwrap();
            assert_eq!(
                check_formula_graph(q.lts()),
                Vec::<String>::new(),
                "round {round}: {f:?}"
            );
        }
    }

    #[test]
    fn quotient_preserves_verdicts_against_the_environment() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let labels = [lab("a"), lab("b")];
        for round in 0..40 {
            let p1 = random_lts(&mut rng, &labels, 4);
            let p2 = random_lts(&mut rng, &labels, 4);
            let p3 = random_lts(&mut rng, &labels, 3);
            let n = Network::new(
                vec![p1, p2, p3],
                vec!["p1".into(), "p2".into(), "p3".into()],
                vec![
                    SyncRule::new(vec![Some(lab("a")), Some(lab("a")), None], lab("a")),
                    SyncRule::new(vec![None, Some(lab("b")), None], lab("b")),
                    SyncRule::new(vec![None, None, Some(lab("a"))], lab("c")),
                    SyncRule::new(vec![Some(lab("b")), None, Some(lab("b"))], lab("d")),
                ],
            );
            let alphabet = [lab("a"), lab("b"), lab("c"), lab("d")];
            let f = random_formula(&mut rng, &alphabet, 3);
            let sigma = alphabet.iter().cloned().collect();
            let resolved = resolve_actions(&f, &sigma);
            let d = block_label(&to_disjunctive(&resolved));
            let g = encode(&d).unwrap();

            let full = product(&n);
            let want = crate::eval::holds_at(&full, full.initial(), &d);

            let i = rng.gen_range(0..3);
            let (q, sub) = quotient(&g, &n, i).unwrap();
            let remaining = product(&sub);
            let quotient_formula = decode(&q).unwrap();
            let got = crate::eval::holds_at(&remaining, remaining.initial(), &quotient_formula);
            assert_eq!(want, got, "round {round}, component {i}, formula {f:?}");
        }
    }
}
