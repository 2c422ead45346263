//! Boolean equation systems: ordered blocks of least/greatest fixpoint
//! equations whose right-hand sides are pure disjunctions or conjunctions
//! of variable references and constants. Provides a nested-iteration
//! oracle, a linear-time local solver for alternation-free systems, and a
//! variant that grants marked variables the value true whenever they lie
//! on a dependency cycle inside their own block.

use crate::fgraph::strongly_connected_components;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Mu,
    Nu,
}

/// A variable is identified by its block, a key local to the block, and
/// its marked flag.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub block: usize,
    pub key: String,
    pub marked: bool,
}

impl Var {
    pub fn new(block: usize, key: impl Into<String>) -> Var {
        Var {
            block,
            key: key.into(),
            marked: false,
        }
    }

    pub fn marked(block: usize, key: impl Into<String>) -> Var {
        Var {
            block,
            key: key.into(),
            marked: true,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}{}", self.block, self.key, if self.marked { "@" } else { "" })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Const(bool),
    Ref(Var),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rhs {
    Disj(Vec<Operand>),
    Conj(Vec<Operand>),
}

impl Rhs {
    fn operands(&self) -> &[Operand] {
        match self {
            Rhs::Disj(ops) | Rhs::Conj(ops) => ops,
        }
    }

    fn is_conj(&self) -> bool {
        matches!(self, Rhs::Conj(_))
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub sign: Sign,
    pub equations: Vec<(Var, Rhs)>,
}

impl Block {
    pub fn new(sign: Sign, equations: Vec<(Var, Rhs)>) -> Block {
        Block { sign, equations }
    }
}

#[derive(Debug, Error)]
pub enum BesError {
    #[error("duplicate definition of {0}")]
    Duplicate(String),
    #[error("reference to undefined variable {0}")]
    Undefined(String),
    #[error("variable {0} defined in block {1}, but its identity names block {2}")]
    BlockMismatch(String, usize, usize),
    #[error("marked variable {0} in a non-disjunctive or greatest-fixpoint context")]
    MarkedContext(String),
    #[error("marked variable {0} present")]
    MarkedPresent(String),
    #[error("cyclic dependency between fixpoints of different signs: {0} and {1}")]
    Alternation(String, String),
}

struct CompiledVar {
    var: Var,
    sign: Sign,
    conj: bool,
    /// Folded constant short-circuit: `Some(true)` for a disjunction with a
    /// true constant, `Some(false)` for a conjunction with a false one.
    short: Option<bool>,
    /// Referenced variables by dense id, deduplicated, first-occurrence order.
    refs: Vec<usize>,
    rhs: Rhs,
}

pub struct Bes {
    signs: Vec<Sign>,
    vars: Vec<CompiledVar>,
    index: HashMap<Var, usize>,
}

impl Bes {
    pub fn new(blocks: Vec<Block>) -> Result<Bes, BesError> {
        let signs: Vec<Sign> = blocks.iter().map(|b| b.sign).collect();
        let mut index = HashMap::new();
        let mut defs = Vec::new();
        for (bi, block) in blocks.iter().enumerate() {
            for (var, rhs) in &block.equations {
                if var.block != bi {
                    return Err(BesError::BlockMismatch(var.to_string(), bi, var.block));
                }
                if index.insert(var.clone(), defs.len()).is_some() {
                    return Err(BesError::Duplicate(var.to_string()));
                }
                defs.push((var.clone(), rhs.clone()));
            }
        }
        // Blocks holding marked variables must be purely disjunctive least
        // fixpoints without true constants.
        for (bi, block) in blocks.iter().enumerate() {
            if !block.equations.iter().any(|(v, _)| v.marked) {
                continue;
            }
            let offender = |v: &Var| BesError::MarkedContext(v.to_string());
            if signs[bi] == Sign::Nu {
                let v = &block.equations.iter().find(|(v, _)| v.marked).unwrap().0;
                return Err(offender(v));
            }
            for (v, rhs) in &block.equations {
                if rhs.is_conj() {
                    return Err(offender(v));
                }
                if rhs.operands().contains(&Operand::Const(true)) {
                    return Err(offender(v));
                }
            }
        }
        let mut vars = Vec::with_capacity(defs.len());
        for (var, rhs) in defs {
            let conj = rhs.is_conj();
            let mut short = None;
            let mut refs = Vec::new();
            for op in rhs.operands() {
                match op {
                    Operand::Const(c) => {
                        if *c != conj {
                            short = Some(*c);
                        }
                    }
                    Operand::Ref(r) => {
                        let id = *index
                            .get(r)
                            .ok_or_else(|| BesError::Undefined(r.to_string()))?;
                        if !refs.contains(&id) {
                            refs.push(id);
                        }
                    }
                }
            }
            let sign = signs[var.block];
            vars.push(CompiledVar {
                var,
                sign,
                conj,
                short,
                refs,
                rhs,
            });
        }
        Ok(Bes { signs, vars, index })
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = &Var> {
        self.vars.iter().map(|cv| &cv.var)
    }
}

/// One equation per line in definition order, for golden tests.
pub fn dump(b: &Bes) -> String {
    let mut out = String::new();
    for cv in &b.vars {
        let sign = match b.signs[cv.var.block] {
            Sign::Mu => "=mu",
            Sign::Nu => "=nu",
        };
        let op = if cv.rhs.is_conj() { "and" } else { "or" };
        let operands: Vec<String> = cv
            .rhs
            .operands()
            .iter()
            .map(|o| match o {
                Operand::Const(true) => "tt".to_string(),
                Operand::Const(false) => "ff".to_string(),
                Operand::Ref(v) => v.to_string(),
            })
            .collect();
        out.push_str(&format!("{} {sign} {op}({})\n", cv.var, operands.join(", ")));
    }
    out
}

fn eval_rhs(bes: &Bes, id: usize, values: &[bool]) -> bool {
    let cv = &bes.vars[id];
    let mut acc = cv.conj;
    for op in cv.rhs.operands() {
        let v = match op {
            Operand::Const(c) => *c,
            Operand::Ref(r) => values[bes.index[r]],
        };
        if cv.conj {
            acc &= v;
        } else {
            acc |= v;
        }
    }
    acc
}

/// Nested fixpoint iteration over blocks in order, outermost first: each
/// sweep of an outer block re-initialises and re-converges all inner
/// blocks. Exponential in the worst case; the reference solution.
pub fn naive_solve(bes: &Bes) -> Result<BTreeMap<Var, bool>, BesError> {
    if let Some(cv) = bes.vars.iter().find(|cv| cv.var.marked) {
        return Err(BesError::MarkedPresent(cv.var.to_string()));
    }
    let nblocks = bes.signs.len();
    let mut values = vec![false; bes.vars.len()];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
    for (id, cv) in bes.vars.iter().enumerate() {
        members[cv.var.block].push(id);
    }
    fn stabilise(bes: &Bes, members: &[Vec<usize>], i: usize, values: &mut Vec<bool>) {
        if i >= members.len() {
            return;
        }
        for &v in &members[i] {
            values[v] = bes.signs[i] == Sign::Nu;
        }
        loop {
            stabilise(bes, members, i + 1, values);
            let mut changed = false;
            for &v in &members[i] {
                let new = eval_rhs(bes, v, values);
                if new != values[v] {
                    values[v] = new;
                    changed = true;
                }
            }
            if !changed {
                return;
            }
        }
    }
    stabilise(bes, &members, 0, &mut values);
    Ok(bes
        .vars
        .iter()
        .enumerate()
        .map(|(id, cv)| (cv.var.clone(), values[id]))
        .collect())
}

/// Demand-driven solver. Values are memoised, so a sequence of calls over
/// one instance explores each variable once.
pub struct Solver<'a> {
    bes: &'a Bes,
    values: HashMap<usize, bool>,
    explored: usize,
    allow_marked: bool,
}

impl<'a> Solver<'a> {
    pub fn new(bes: &'a Bes) -> Solver<'a> {
        Solver {
            bes,
            values: HashMap::new(),
            explored: 0,
            allow_marked: true,
        }
    }

    pub fn without_marked(bes: &'a Bes) -> Solver<'a> {
        Solver {
            allow_marked: false,
            ..Solver::new(bes)
        }
    }

    pub fn explored(&self) -> usize {
        self.explored
    }

    pub fn solve(&mut self, target: &Var) -> Result<bool, BesError> {
        let root = *self
            .bes
            .index
            .get(target)
            .ok_or_else(|| BesError::Undefined(target.to_string()))?;
        if let Some(&v) = self.values.get(&root) {
            return Ok(v);
        }

        // Discover the not-yet-solved variables reachable from the target;
        // already-memoised ones act as constants.
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut stack = vec![root];
        local.insert(root, 0);
        order.push(root);
        while let Some(v) = stack.pop() {
            for &r in &self.bes.vars[v].refs {
                if self.values.contains_key(&r) || local.contains_key(&r) {
                    continue;
                }
                local.insert(r, order.len());
                order.push(r);
                stack.push(r);
            }
        }
        self.explored += order.len();
        if !self.allow_marked {
            if let Some(&v) = order.iter().find(|&&v| self.bes.vars[v].var.marked) {
                return Err(BesError::MarkedPresent(self.bes.vars[v].var.to_string()));
            }
        }

        let n = order.len();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (lu, &u) in order.iter().enumerate() {
            for &r in &self.bes.vars[u].refs {
                if let Some(&lv) = local.get(&r) {
                    edges.push((lu, lv));
                }
            }
        }
        let comp = strongly_connected_components(n, &edges);
        let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);

        // Alternation check: a strongly connected set of equations must
        // carry one sign.
        let mut comp_sign: Vec<Option<Sign>> = vec![None; ncomp];
        for (lu, &u) in order.iter().enumerate() {
            let s = self.bes.vars[u].sign;
            match comp_sign[comp[lu]] {
                None => comp_sign[comp[lu]] = Some(s),
                Some(prev) if prev != s => {
                    let other = order
                        .iter()
                        .enumerate()
                        .find(|(lv, _)| comp[*lv] == comp[lu])
                        .map(|(_, &v)| v)
                        .unwrap();
                    return Err(BesError::Alternation(
                        self.bes.vars[other].var.to_string(),
                        self.bes.vars[u].var.to_string(),
                    ));
                }
                _ => {}
            }
        }

        // A marked variable on a cycle inside its own block is true.
        let mut pinned = vec![false; n];
        if order.iter().any(|&u| self.bes.vars[u].var.marked) {
            let restricted: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|(lu, lv)| {
                    self.bes.vars[order[*lu]].var.block == self.bes.vars[order[*lv]].var.block
                })
                .collect();
            let rcomp = strongly_connected_components(n, &restricted);
            let mut has_cycle = vec![false; n];
            for (lu, lv) in &restricted {
                if rcomp[*lu] == rcomp[*lv] {
                    has_cycle[rcomp[*lu]] = true;
                }
            }
            for (lu, &u) in order.iter().enumerate() {
                if self.bes.vars[u].var.marked && has_cycle[rcomp[lu]] {
                    pinned[lu] = true;
                }
            }
        }

        // Solve components dependencies-first (ascending component ids).
        let mut comp_members: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
        for lu in 0..n {
            comp_members[comp[lu]].push(lu);
        }
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (lu, lv) in &edges {
            if comp[*lu] == comp[*lv] {
                rev[*lv].push(*lu);
            }
        }
        let mut fired = vec![false; n];
        let mut dead = vec![false; n];
        let mut need = vec![0usize; n];
        for c in 0..ncomp {
            let sign = comp_sign[c].expect("componified variable has a sign");
            let firing = sign == Sign::Mu;
            let mut queue: Vec<usize> = Vec::new();
            for &lu in &comp_members[c] {
                let u = order[lu];
                let cv = &self.bes.vars[u];
                // Exists-fire: a disjunction reaching the µ value true, or a
                // conjunction reaching the ν value false, fires as soon as
                // one operand does. Otherwise all operands must.
                let exists = cv.conj != firing;
                let mut outside_hit = false;
                let mut outside_miss = false;
                let mut inner = 0usize;
                for &r in &cv.refs {
                    let val = if let Some(&v) = self.values.get(&r) {
                        Some(v)
                    } else {
                        let lr = local[&r];
                        // Distinct components are processed dependencies
                        // first, so an unsolved reference is internal.
                        assert_eq!(comp[lr], c, "dependency order violated");
                        inner += 1;
                        None
                    };
                    match val {
                        Some(v) if v == firing => outside_hit = true,
                        Some(_) => outside_miss = true,
                        None => {}
                    }
                }
                let short_hit = cv.short == Some(firing);
                let short_miss = cv.short == Some(!firing);
                if exists {
                    if short_hit || outside_hit || pinned[lu] {
                        fired[lu] = true;
                        queue.push(lu);
                    }
                } else if short_miss || outside_miss {
                    dead[lu] = true;
                } else {
                    need[lu] = inner;
                    if inner == 0 {
                        fired[lu] = true;
                        queue.push(lu);
                    }
                }
            }
            while let Some(lv) = queue.pop() {
                for &lu in &rev[lv] {
                    if fired[lu] || dead[lu] {
                        continue;
                    }
                    let exists = self.bes.vars[order[lu]].conj != firing;
                    if exists {
                        fired[lu] = true;
                        queue.push(lu);
                    } else {
                        need[lu] -= 1;
                        if need[lu] == 0 {
                            fired[lu] = true;
                            queue.push(lu);
                        }
                    }
                }
            }
            for &lu in &comp_members[c] {
                let value = if fired[lu] { firing } else { !firing };
                self.values.insert(order[lu], value);
            }
        }
        Ok(self.values[&root])
    }
}

/// Resolves one variable of an alternation-free system without marked
/// variables, exploring only what the target depends on.
pub fn solve_local(bes: &Bes, target: &Var) -> Result<bool, BesError> {
    Solver::without_marked(bes).solve(target)
}

/// Like [`solve_local`], but marked variables evaluate to true whenever
/// they lie on a dependency cycle within their own block, with truth
/// back-propagated through the disjunctions that reach them.
pub fn solve_with_cycles(bes: &Bes, target: &Var) -> Result<bool, BesError> {
    Solver::new(bes).solve(target)
}
