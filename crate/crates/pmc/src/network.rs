//! Networks of LTSs: components composed through synchronisation rules,
//! the reachable global product, environment extraction with fresh
//! interaction labels, and the `.net` file format.

use crate::lts::{Label, Lts, LtsError, Transition};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io;
use std::path::Path;
use thiserror::Error;

/// One synchronisation rule: a vector with one slot per component (`None`
/// marks a component that does not participate) and the label of the
/// resulting global transition. Participating components must all fire a
/// transition carrying their slot's label simultaneously; the others stay
/// put.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncRule {
    vector: Vec<Option<Label>>,
    result: Label,
}

impl SyncRule {
    /// Panics if every slot is inactive; parsers reject that case with a
    /// proper error before constructing.
    pub fn new(vector: Vec<Option<Label>>, result: Label) -> Self {
        assert!(
            vector.iter().any(|e| e.is_some()),
            "a synchronisation rule needs at least one active component"
        );
        SyncRule { vector, result }
    }

    pub fn vector(&self) -> &[Option<Label>] {
        &self.vector
    }

    pub fn result(&self) -> &Label {
        &self.result
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.vector
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_some())
            .map(|(i, _)| i)
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.vector[i].is_some()
    }

    /// True when `i` is the only active position.
    pub fn is_exclusive(&self, i: usize) -> bool {
        self.is_active(i) && self.active().count() == 1
    }
}

/// A vector of component LTSs plus an ordered rule list. Rule order is
/// significant: interaction labels derived during extraction embed the rule
/// index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    components: Vec<Lts>,
    names: Vec<String>,
    rules: Vec<SyncRule>,
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: rule has {found} entries but the network has {expected} components")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: rule with all components inactive")]
    AllInactive { line: usize },
    #[error("component index {index} out of range for network of size {size}")]
    BadIndex { index: usize, size: usize },
    #[error("operation needs a network of at least {needed} components, got {size}")]
    TooSmall { needed: usize, size: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("in {path}: {source}")]
    Component {
        path: String,
        #[source]
        source: LtsError,
    },
}

impl Network {
    /// Builds a network; `names` are display names used in reports and when
    /// writing `.net` files. An empty network (no components, no rules) is
    /// permitted as the result of quotienting away the last component.
    pub fn new(components: Vec<Lts>, names: Vec<String>, rules: Vec<SyncRule>) -> Self {
        assert_eq!(components.len(), names.len());
        for rule in &rules {
            assert_eq!(
                rule.vector.len(),
                components.len(),
                "rule arity must match network size"
            );
        }
        Network {
            components,
            names,
            rules,
        }
    }

    pub fn empty() -> Self {
        Network::new(Vec::new(), Vec::new(), Vec::new())
    }

    pub fn size(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &Lts {
        &self.components[i]
    }

    pub fn components(&self) -> &[Lts] {
        &self.components
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn rules(&self) -> &[SyncRule] {
        &self.rules
    }

    /// The set of result labels over all rules.
    pub fn alphabet(&self) -> BTreeSet<Label> {
        self.rules.iter().map(|r| r.result.clone()).collect()
    }

    /// The deterministic fresh interaction label for a rule: a reserved
    /// `%sync.` name embedding the rule index, so distinct rules never
    /// collide with each other or with component labels.
    pub fn alpha_label(&self, rule_index: usize) -> Label {
        Label::new(format!(
            "%sync.{}.{}",
            rule_index,
            self.rules[rule_index].result.text()
        ))
    }
}

/// Builds the reachable global LTS of the network. States are tuples of
/// component states, numbered densely in breadth-first discovery order from
/// the initial tuple; a rule fires in a tuple when every active component
/// has a transition carrying the rule's slot label.
pub fn product(n: &Network) -> Lts {
    product_capped(n, usize::MAX).expect("no cap")
}

/// Like [`product`], but gives up with `None` as soon as more than `cap`
/// global states have been discovered.
pub fn product_capped(n: &Network, cap: usize) -> Option<Lts> {
    assert!(n.size() >= 1, "product needs at least one component");
    let initial: Vec<usize> = n.components.iter().map(|c| c.initial()).collect();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut tuples: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(initial.clone(), 0);
    tuples.push(initial);
    queue.push_back(0usize);
    let mut transitions: Vec<Transition> = Vec::new();

    while let Some(id) = queue.pop_front() {
        let tuple = tuples[id].clone();
        for rule in &n.rules {
            // Per active position, the possible local targets.
            let mut moves: Vec<(usize, Vec<usize>)> = Vec::new();
            let mut blocked = false;
            for (i, slot) in rule.vector.iter().enumerate() {
                if let Some(label) = slot {
                    let targets: Vec<usize> = n.components[i]
                        .outgoing(tuple[i])
                        .iter()
                        .filter(|(_, l, _)| l == label)
                        .map(|(_, _, t)| *t)
                        .collect();
                    if targets.is_empty() {
                        blocked = true;
                        break;
                    }
                    moves.push((i, targets));
                }
            }
            if blocked {
                continue;
            }
            // All combinations of local moves, in lexicographic order.
            let mut combo = vec![0usize; moves.len()];
            loop {
                let mut target = tuple.clone();
                for (slot, (i, targets)) in combo.iter().zip(&moves) {
                    target[*i] = targets[*slot];
                }
                let next_id = *index.entry(target.clone()).or_insert_with(|| {
                    tuples.push(target);
                    queue.push_back(tuples.len() - 1);
                    tuples.len() - 1
                });
                if tuples.len() > cap {
                    return None;
                }
                transitions.push((id, rule.result.clone(), next_id));
                // Advance the mixed-radix counter.
                let mut pos = combo.len();
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    combo[pos] += 1;
                    if combo[pos] < moves[pos].1.len() {
                        break;
                    }
                    combo[pos] = 0;
                }
                if combo.iter().all(|&c| c == 0) {
                    break;
                }
            }
        }
    }
    Some(Lts::new(tuples.len(), 0, transitions).expect("product construction is in range"))
}

/// Removes component `i` (0-based), returning the environment network and
/// the two-position interface rules that recompose the component (slot 0)
/// with the environment's product (slot 1).
///
/// Rules where `i` is inactive are projected unchanged; rules shared
/// between `i` and others are projected and relabelled with the rule's
/// interaction label; rules exclusive to `i` disappear from the
/// environment.
pub fn extract_subnetwork(n: &Network, i: usize) -> Result<(Network, Vec<SyncRule>), NetError> {
    if n.size() < 2 {
        return Err(NetError::TooSmall {
            needed: 2,
            size: n.size(),
        });
    }
    if i >= n.size() {
        return Err(NetError::BadIndex {
            index: i,
            size: n.size(),
        });
    }
    let mut sub_rules = Vec::new();
    let mut interface = Vec::new();
    for (idx, rule) in n.rules.iter().enumerate() {
        let projected: Vec<Option<Label>> = rule
            .vector
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, e)| e.clone())
            .collect();
        if !rule.is_active(i) {
            sub_rules.push(SyncRule::new(projected, rule.result.clone()));
            interface.push(SyncRule::new(
                vec![None, Some(rule.result.clone())],
                rule.result.clone(),
            ));
        } else if rule.is_exclusive(i) {
            interface.push(SyncRule::new(
                vec![rule.vector[i].clone(), None],
                rule.result.clone(),
            ));
        } else {
            let alpha = n.alpha_label(idx);
            sub_rules.push(SyncRule::new(projected, alpha.clone()));
            interface.push(SyncRule::new(
                vec![rule.vector[i].clone(), Some(alpha)],
                rule.result.clone(),
            ));
        }
    }
    let components = n
        .components
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, c)| c.clone())
        .collect();
    let names = n
        .names
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, s)| s.clone())
        .collect();
    Ok((Network::new(components, names, sub_rules), interface))
}

/// Parses the `.net` format. The first content line is
/// `lts <path1> <path2> …`; every other line is a rule
/// `(<e1>, …, <en>) -> "<result>"` with `<ei>` a quoted label or `-`.
/// `#` starts a comment; `loader` maps each header path to the text of the
/// corresponding `.aut` file.
pub fn parse_net(
    text: &str,
    loader: &mut dyn FnMut(&str) -> io::Result<String>,
) -> Result<Network, NetError> {
    let mut components = Vec::new();
    let mut names = Vec::new();
    let mut rules = Vec::new();
    let mut saw_header = false;
    for (no, raw) in text.lines().enumerate() {
        let no = no + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some("lts") {
                return Err(NetError::Syntax {
                    line: no,
                    message: "expected `lts <path> …` header".into(),
                });
            }
            for path in tokens {
                let text = loader(path).map_err(|source| NetError::Io {
                    path: path.into(),
                    source,
                })?;
                let lts = crate::lts::parse_aut(&text).map_err(|source| NetError::Component {
                    path: path.into(),
                    source,
                })?;
                components.push(lts);
                names.push(path.to_string());
            }
            if components.is_empty() {
                return Err(NetError::Syntax {
                    line: no,
                    message: "header lists no components".into(),
                });
            }
            saw_header = true;
        } else {
            rules.push(parse_rule_line(line, no, components.len())?);
        }
    }
    if !saw_header {
        return Err(NetError::Syntax {
            line: 1,
            message: "missing `lts` header".into(),
        });
    }
    Ok(Network::new(components, names, rules))
}

/// Reads a `.net` file, loading component files relative to its directory.
pub fn load_net(path: &Path) -> Result<Network, NetError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_net(&text, &mut |rel| std::fs::read_to_string(dir.join(rel)))
}

/// Serialises header and rules; component names double as paths, so the
/// output reloads if matching `.aut` files sit next to it.
pub fn write_net(n: &Network) -> String {
    let mut out = String::from("lts");
    for name in &n.names {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    for rule in &n.rules {
        let entries: Vec<String> = rule
            .vector
            .iter()
            .map(|e| match e {
                None => "-".to_string(),
                Some(l) => format!("\"{}\"", escape(l.text())),
            })
            .collect();
        out.push_str(&format!(
            "({}) -> \"{}\"\n",
            entries.join(", "),
            escape(rule.result.text())
        ));
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Truncates at the first `#` that is outside a quoted label.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (pos, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..pos],
            _ => {}
        }
    }
    line
}

fn parse_rule_line(line: &str, no: usize, arity: usize) -> Result<SyncRule, NetError> {
    let err = |message: String| NetError::Syntax { line: no, message };
    let mut chars = line.chars().peekable();
    let skip_ws = |chars: &mut std::iter::Peekable<std::str::Chars>| {
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
    };
    let read_quoted = |chars: &mut std::iter::Peekable<std::str::Chars>| -> Result<String, NetError> {
        let mut out = String::new();
        loop {
            match chars.next() {
                Some('"') => break,
                Some('\\') => match chars.next() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    other => return Err(err(format!("bad escape {other:?} in label"))),
                },
                Some(c) => out.push(c),
                None => return Err(err("unterminated label".into())),
            }
        }
        if out.is_empty() || out == "-" {
            return Err(err("label must be non-empty and not `-`".into()));
        }
        Ok(out)
    };

    skip_ws(&mut chars);
    if chars.next() != Some('(') {
        return Err(err("expected `(` at start of rule".into()));
    }
    let mut vector = Vec::new();
    loop {
        skip_ws(&mut chars);
        match chars.next() {
            Some('-') => vector.push(None),
            Some('"') => vector.push(Some(Label::new(read_quoted(&mut chars)?))),
            other => return Err(err(format!("expected `-` or quoted label, found {other:?}"))),
        }
        skip_ws(&mut chars);
        match chars.next() {
            Some(',') => continue,
            Some(')') => break,
            other => return Err(err(format!("expected `,` or `)`, found {other:?}"))),
        }
    }
    skip_ws(&mut chars);
    if !(chars.next() == Some('-') && chars.next() == Some('>')) {
        return Err(err("expected `->` after rule vector".into()));
    }
    skip_ws(&mut chars);
    if chars.next() != Some('"') {
        return Err(err("expected quoted result label".into()));
    }
    let result = Label::new(read_quoted(&mut chars)?);
    skip_ws(&mut chars);
    if chars.next().is_some() {
        return Err(err("trailing text after rule".into()));
    }
    if vector.len() != arity {
        return Err(NetError::Arity {
            line: no,
            expected: arity,
            found: vector.len(),
        });
    }
    if vector.iter().all(|e| e.is_none()) {
        return Err(NetError::AllInactive { line: no });
    }
    Ok(SyncRule::new(vector, result))
}
