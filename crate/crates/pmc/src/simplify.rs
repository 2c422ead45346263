//! Simplification of formula graphs.
//!
//! Each rule rewrites a graph into a smaller one denoting the same property
//! against every environment. The pipeline interleaves structural rules
//! (disjunction elimination, unguarded self-loops, double negations,
//! relaxable fixpoint edges), a constant evaluator backed by a Boolean
//! equation system, and bisimulation sharing, until nothing changes.

use crate::bes::{self, Bes, Block, Operand, Rhs, Sign, Var};
use crate::fgraph::{check_formula_graph, strongly_connected_components, FormulaGraph, GLabel};
use crate::lts::{restrict_reachable, strong_bisim_reduce, tau_star_a_reduce, Lts, Transition};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error("constant evaluation needs alternation-free blocks: {0}")]
    Alternation(String),
    #[error("simplification did not stabilise within {0} passes")]
    Diverged(usize),
}

/// Truth of the subformula rooted at a state, as far as it can be decided
/// without knowing the remaining environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Tt,
    Ff,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Tt,
    Ff,
    Unresolved,
}

/// What the pipeline did: pass count, how many passes each rule changed the
/// graph in, sizes before and after, and one row per effective rule
/// application.
#[derive(Clone, Debug)]
pub struct SimplifyReport {
    pub passes: usize,
    pub applications: BTreeMap<&'static str, usize>,
    pub before: (usize, usize),
    pub after: (usize, usize),
    pub verdict: Verdict,
    pub steps: Vec<(String, usize, usize)>,
}

impl SimplifyReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>6} {:>12}\n",
            "step", "states", "transitions"
        ));
        out.push_str(&format!(
            "{:<16} {:>6} {:>12}\n",
            "input", self.before.0, self.before.1
        ));
        for (name, states, transitions) in &self.steps {
            out.push_str(&format!("{name:<16} {states:>6} {transitions:>12}\n"));
        }
        out
    }
}

fn dims(g: &FormulaGraph) -> (usize, usize) {
    (g.lts().state_count(), g.lts().transitions().len())
}

fn glabel(t: &Transition) -> GLabel {
    GLabel::parse(&t.1).expect("validated formula graph")
}

/// Removes `%or` transitions by saturation: every state inherits the
/// non-`%or` transitions of its `%or`-closure, and the result is reduced
/// modulo strong bisimilarity. A disjunction is the union of the behaviours
/// of its disjuncts, so the closure denotes the same property.
pub fn eliminate_or(g: &FormulaGraph) -> FormulaGraph {
    let internal = [GLabel::Or.label()].into_iter().collect();
    FormulaGraph::from_unchecked(tau_star_a_reduce(g.lts(), &internal))
}

/// Drops plain `%mu.k` self-loops: they unfold to the disjunction of the
/// remaining behaviour with itself. Marked `%mu@.k` self-loops stay; such a
/// loop is an acceptance cycle witness owed to the constant evaluator.
pub fn eliminate_unguarded(g: &FormulaGraph) -> FormulaGraph {
    let lts = g.lts();
    let kept: Vec<Transition> = lts
        .transitions()
        .iter()
        .filter(|t| !(t.0 == t.2 && matches!(glabel(t), GLabel::Mu(_))))
        .cloned()
        .collect();
    FormulaGraph::from_unchecked(
        Lts::new(lts.state_count(), lts.initial(), kept).expect("states unchanged"),
    )
}

/// Shortcuts double negations: when s1 -%not-> s2 -%not-> s3 and the inner
/// negation is the only transition of s2, the pair denotes s3 itself, so
/// the first edge is replaced by s1 -%or-> s3. The inner edge stays for the
/// sake of other predecessors of s2. Runs to fixpoint.
pub fn eliminate_double_neg(g: &FormulaGraph) -> FormulaGraph {
    let lts = g.lts();
    let n = lts.state_count();
    let mut edges: BTreeSet<Transition> = lts.transitions().iter().cloned().collect();
    loop {
        let mut out_count = vec![0usize; n];
        for t in &edges {
            out_count[t.0] += 1;
        }
        let mut sole_not_target = vec![None; n];
        for t in &edges {
            if out_count[t.0] == 1 && glabel(t) == GLabel::Not {
                sole_not_target[t.0] = Some(t.2);
            }
        }
        let rewrites: Vec<(Transition, Transition)> = edges
            .iter()
            .filter(|t| glabel(t) == GLabel::Not)
            .filter_map(|t| {
                sole_not_target[t.2].map(|s3| (t.clone(), (t.0, GLabel::Or.label(), s3)))
            })
            .collect();
        if rewrites.is_empty() {
            break;
        }
        for (old, new) in rewrites {
            edges.remove(&old);
            edges.insert(new);
        }
    }
    FormulaGraph::from_unchecked(
        Lts::new(n, lts.initial(), edges.into_iter().collect()).expect("states unchanged"),
    )
}

/// Relabels a plain `%mu.k` transition into `%or` when it cannot complete a
/// circuit: either its endpoints lie in different strongly connected
/// components, or its source is only enterable through an unbroken chain of
/// single-predecessor states starting right after some state whose sole
/// transition is itself a fixpoint edge. Only reachable states participate;
/// marked edges are never relaxed.
pub fn eliminate_mu(g: &FormulaGraph) -> FormulaGraph {
    let lts = g.lts();
    let n = lts.state_count();
    let reach = lts.reachable();
    let live: Vec<Transition> = lts
        .transitions()
        .iter()
        .filter(|t| reach[t.0])
        .cloned()
        .collect();
    let comp = strongly_connected_components(
        n,
        &live.iter().map(|t| (t.0, t.2)).collect::<Vec<_>>(),
    );
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for t in &live {
        preds[t.2].insert(t.0);
    }

    fn guarded_entry(
        lts: &Lts,
        preds: &[BTreeSet<usize>],
        s: usize,
        seen: &mut BTreeSet<usize>,
    ) -> bool {
        if s == lts.initial() || !seen.insert(s) || preds[s].len() != 1 {
            return false;
        }
        let p = *preds[s].iter().next().expect("single predecessor");
        let out = lts.outgoing(p);
        if out.len() == 1 && glabel(&out[0]).is_mu() {
            return true;
        }
        guarded_entry(lts, preds, p, seen)
    }

    let rewritten: Vec<Transition> = lts
        .transitions()
        .iter()
        .map(|t| {
            let relax = reach[t.0]
                && matches!(glabel(t), GLabel::Mu(_))
                && (comp[t.0] != comp[t.2]
                    || guarded_entry(lts, &preds, t.0, &mut BTreeSet::new()));
            if relax {
                (t.0, GLabel::Or.label(), t.2)
            } else {
                t.clone()
            }
        })
        .collect();
    FormulaGraph::from_unchecked(
        Lts::new(n, lts.initial(), rewritten).expect("states unchanged"),
    )
}

// ---------------------------------------------------------------------------
// Constant evaluation.

/// One Boolean variable: does the subformula at `state` evaluate to the
/// claimed constant when reached under `k` with the given letter and
/// negation parity? The four shapes form two proof systems, one asserting
/// truth (letter T, least fixpoints) and one falsity (letter F, greatest
/// fixpoints); parity records whether an odd number of negations inverts
/// the claim the instance makes about the state itself.
type Inst = (bool, bool, u32, usize);

const LETTER_T: bool = true;
const PLUS: bool = true;

fn claims_tt((letter, plus, _, _): &Inst) -> bool {
    // T at even parity proves the state true; F at odd parity proves the
    // negated context false, which again pins the state itself to true.
    *letter == *plus
}

fn instance_edges(lts: &Lts, inst: &Inst) -> (bool, Vec<Inst>) {
    let (letter, plus, k, s) = *inst;
    let conjunctive = letter != plus;
    let mut deps = Vec::new();
    for t in lts.outgoing(s) {
        let dep = match glabel(t) {
            GLabel::Or => Some((letter, plus, k, t.2)),
            GLabel::Not => Some((letter, !plus, k, t.2)),
            GLabel::Dia(_) => {
                // A modality blocks truth claims outright; falsity claims
                // stay open because the environment may remove it.
                if conjunctive {
                    Some((letter, plus, k, t.2))
                } else {
                    None
                }
            }
            GLabel::Mu(k2) | GLabel::MuMarked(k2) => {
                if letter == LETTER_T && plus {
                    Some((LETTER_T, PLUS, k2, t.2))
                } else if letter == LETTER_T {
                    Some((!LETTER_T, PLUS, k2, t.2))
                } else if plus {
                    Some((!LETTER_T, PLUS, k2, t.2))
                } else {
                    Some((LETTER_T, PLUS, k2, t.2))
                }
            }
        };
        deps.extend(dep);
    }
    (conjunctive, deps)
}

/// Decides for every reachable state whether its subformula is already a
/// constant, rewrites the graph accordingly and prunes what became
/// unreachable. The returned statuses are indexed by the states of the
/// input graph.
///
/// The equation system instantiates every state at each (letter, parity,
/// block) combination actually reaching it. A variable at a marked binder
/// whose `%mu@` block equals its own context is marked, so a cycle of such
/// instances counts as an acceptance witness and solves to true; the
/// falsity instance of such a binder is forced to false instead, because a
/// greatest fixpoint would otherwise declare the loop false-proving. Both
/// treatments are re-derived from scratch on every call, so claims blocked
/// by a modality today may resolve after the next quotient.
pub fn evaluate_constants(
    g: &FormulaGraph,
) -> Result<(FormulaGraph, Vec<Status>), SimplifyError> {
    let lts = g.lts();
    let n = lts.state_count();
    let comp = strongly_connected_components(
        n,
        &lts.transitions().iter().map(|t| (t.0, t.2)).collect::<Vec<_>>(),
    );
    let marked_loop = |k: u32, s: usize, on_cycle: bool| {
        lts.outgoing(s).iter().any(|t| {
            glabel(t) == GLabel::MuMarked(k) && (!on_cycle || comp[t.0] == comp[t.2])
        })
    };

    let seeds = [
        (LETTER_T, PLUS, 0u32, lts.initial()),
        (!LETTER_T, PLUS, 0u32, lts.initial()),
    ];
    let mut instances: BTreeSet<Inst> = seeds.into_iter().collect();
    let mut queue: VecDeque<Inst> = instances.iter().copied().collect();
    while let Some(inst) = queue.pop_front() {
        let forced = !inst.0 && inst.1 && marked_loop(inst.2, inst.3, true);
        if forced {
            continue;
        }
        for dep in instance_edges(lts, &inst).1 {
            if instances.insert(dep) {
                queue.push_back(dep);
            }
        }
    }

    let block_keys: BTreeSet<(bool, bool, u32)> =
        instances.iter().map(|&(l, p, k, _)| (!l, !p, k)).collect();
    let block_ids: BTreeMap<(bool, bool, u32), usize> = block_keys
        .iter()
        .enumerate()
        .map(|(i, key)| (*key, i))
        .collect();
    let mk_var = |inst: &Inst| {
        let (letter, plus, k, s) = *inst;
        let block = block_ids[&(!letter, !plus, k)];
        if letter == LETTER_T && plus && marked_loop(k, s, false) {
            Var::marked(block, s.to_string())
        } else {
            Var::new(block, s.to_string())
        }
    };

    let mut blocks: Vec<Block> = block_keys
        .iter()
        .map(|&(notl, _, _)| Block::new(if notl { Sign::Nu } else { Sign::Mu }, Vec::new()))
        .collect();
    for inst in &instances {
        let rhs = if !inst.0 && inst.1 && marked_loop(inst.2, inst.3, true) {
            Rhs::Conj(vec![Operand::Const(false)])
        } else {
            let (conjunctive, deps) = instance_edges(lts, inst);
            let ops = deps.iter().map(|d| Operand::Ref(mk_var(d))).collect();
            if conjunctive {
                Rhs::Conj(ops)
            } else {
                Rhs::Disj(ops)
            }
        };
        let block = block_ids[&(!inst.0, !inst.1, inst.2)];
        blocks[block].equations.push((mk_var(inst), rhs));
    }

    let bes = Bes::new(blocks).expect("instance system is well formed");
    let mut solver = bes::Solver::new(&bes);
    let mut values: BTreeMap<Inst, bool> = BTreeMap::new();
    for inst in &instances {
        let value = solver.solve(&mk_var(inst)).map_err(|e| match e {
            bes::BesError::Alternation(a, b) => {
                SimplifyError::Alternation(format!("{a} depends on {b}"))
            }
            other => panic!("instance system rejected: {other}"),
        })?;
        values.insert(*inst, value);
    }

    let mut claims = vec![[(false, true), (false, true)]; n];
    for (inst, value) in &values {
        let slot = &mut claims[inst.3][usize::from(claims_tt(inst))];
        slot.0 = true;
        slot.1 &= value;
    }
    let statuses: Vec<Status> = claims
        .iter()
        .enumerate()
        .map(|(s, [ff_claims, tt_claims])| {
            let tt = tt_claims.0 && tt_claims.1;
            let ff = ff_claims.0 && ff_claims.1;
            debug_assert!(!(tt && ff), "state {s} proven both true and false");
            if tt {
                Status::Tt
            } else if ff {
                Status::Ff
            } else {
                Status::Unknown
            }
        })
        .collect();

    if statuses.iter().all(|s| *s == Status::Unknown) {
        return Ok((g.clone(), statuses));
    }

    let tt = |s: usize| statuses[s] == Status::Tt;
    let ff = |s: usize| statuses[s] == Status::Ff;
    let sink = (0..n).find(|&s| lts.outgoing(s).is_empty());
    let (states, sink) = match (statuses.iter().any(|s| *s == Status::Tt), sink) {
        (false, _) => (n, None),
        (true, Some(s)) => (n, Some(s)),
        (true, None) => (n + 1, Some(n)),
    };
    let mut kept: Vec<Transition> = lts
        .transitions()
        .iter()
        .filter(|t| {
            let negation = glabel(t) == GLabel::Not;
            !tt(t.0) && !ff(t.0) && !(negation && tt(t.2)) && !(!negation && ff(t.2))
        })
        .cloned()
        .collect();
    for s in (0..n).filter(|&s| tt(s)) {
        kept.push((s, GLabel::Not.label(), sink.expect("sink exists")));
    }
    let rewritten = Lts::new(states, lts.initial(), kept).expect("sink state allocated");
    Ok((
        FormulaGraph::from_unchecked(restrict_reachable(&rewritten)),
        statuses,
    ))
}

/// Merges strongly bisimilar states; identical subgraphs denote identical
/// subformulas, so the quotient is sound.
pub fn share(g: &FormulaGraph) -> FormulaGraph {
    FormulaGraph::from_unchecked(strong_bisim_reduce(g.lts()))
}

/// Recognises the two canonical constant graphs: a single deadlock state
/// denotes ff, a state whose sole transition negates a deadlock denotes tt.
pub fn constant_verdict(g: &FormulaGraph) -> Verdict {
    let lts = g.lts();
    if lts.state_count() == 1 && lts.transitions().is_empty() {
        return Verdict::Ff;
    }
    if lts.state_count() == 2 && lts.transitions().len() == 1 {
        let t = &lts.transitions()[0];
        if t.0 == lts.initial() && t.2 != t.0 && glabel(t) == GLabel::Not {
            return Verdict::Tt;
        }
    }
    Verdict::Unresolved
}

const MAX_PASSES: usize = 100;

/// Runs all rules in a fixed order until a whole pass changes nothing.
/// Every intermediate graph stays a valid formula graph; the final graph is
/// strongly-bisimilarity minimal.
pub fn simplify_pipeline(
    g: &FormulaGraph,
) -> Result<(FormulaGraph, SimplifyReport), SimplifyError> {
    const RULES: [&str; 6] = ["or", "unguarded", "double_neg", "mu", "constants", "share"];
    let mut applications: BTreeMap<&'static str, usize> =
        RULES.iter().map(|r| (*r, 0)).collect();
    let before = dims(g);
    let mut steps = Vec::new();
    let mut current = g.clone();
    let mut passes = 0;
    loop {
        if passes == MAX_PASSES {
            return Err(SimplifyError::Diverged(MAX_PASSES));
        }
        passes += 1;
        let at_entry = current.clone();
        for rule in RULES {
            let next = match rule {
                "or" => eliminate_or(&current),
                "unguarded" => eliminate_unguarded(&current),
                "double_neg" => eliminate_double_neg(&current),
                "mu" => eliminate_mu(&current),
                "constants" => evaluate_constants(&current)?.0,
                _ => share(&current),
            };
            if next != current {
                debug_assert!(
                    check_formula_graph(next.lts()).is_empty(),
                    "rule {rule} broke the graph: {:?}",
                    check_formula_graph(next.lts())
                );
                *applications.get_mut(rule).expect("known rule") += 1;
                let (states, transitions) = dims(&next);
                steps.push((format!("{passes}.{rule}"), states, transitions));
                current = next;
            }
        }
        if current == at_entry {
            break;
        }
    }
    let report = SimplifyReport {
        passes,
        applications,
        before,
        after: dims(&current),
        verdict: constant_verdict(&current),
        steps,
    };
    Ok((current, report))
}
