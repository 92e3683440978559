//! Script reader: s-expression lexing, command handling, and recovery of a
//! problem program from declarations and assertions.

use super::{SmtError, Sort};
use crate::dsl::{Constraint, Domain, Item, LetDecl, Program, RelOp, VarDecl, ANSWER_NAME};
use crate::expr::Expr;
use crate::rational::Rational;
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    comments: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            comments: Vec::new(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(&b) = self.src.get(self.pos) {
            if b == b'\n' {
                self.line += 1;
                self.pos += 1;
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b';' {
                let mut comment = String::new();
                self.pos += 1;
                while let Some(&b) = self.src.get(self.pos) {
                    if b == b'\n' {
                        break;
                    }
                    comment.push(b as char);
                    self.pos += 1;
                }
                let trimmed = comment.trim_start_matches(';').trim();
                self.comments.push(trimmed.to_string());
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<SExpr>, SmtError> {
        self.skip_trivia();
        let Some(&b) = self.src.get(self.pos) else {
            return Ok(None);
        };
        match b {
            b'(' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.src.get(self.pos) {
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Some(SExpr::List(items)));
                        }
                        Some(_) => match self.read()? {
                            Some(item) => items.push(item),
                            None => {
                                return Err(SmtError::Syntax(format!(
                                    "line {}: unclosed parenthesis",
                                    self.line
                                )))
                            }
                        },
                        None => {
                            return Err(SmtError::Syntax(format!(
                                "line {}: unclosed parenthesis",
                                self.line
                            )))
                        }
                    }
                }
            }
            b')' => Err(SmtError::Syntax(format!(
                "line {}: unexpected `)`",
                self.line
            ))),
            _ => {
                let start = self.pos;
                while let Some(&b) = self.src.get(self.pos) {
                    if b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b';' {
                        break;
                    }
                    self.pos += 1;
                }
                let atom = std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| SmtError::Syntax("non-utf8 atom".into()))?;
                Ok(Some(SExpr::Atom(atom.to_string())))
            }
        }
    }
}

/// Parses a script in the supported subset into a problem program whose
/// solve outcome matches the script's model on the queried variable.
pub fn parse_smt(text: &str) -> Result<Program, SmtError> {
    let mut reader = Reader::new(text);
    let mut commands = Vec::new();
    while let Some(sexpr) = reader.read()? {
        commands.push(sexpr);
    }

    let mut decls: Vec<(String, Sort)> = Vec::new();
    let mut declared: BTreeMap<String, Sort> = BTreeMap::new();
    let mut assertions: Vec<SExpr> = Vec::new();
    let mut saw_check_sat = false;
    let mut query: Option<String> = None;

    for cmd in commands {
        let SExpr::List(items) = &cmd else {
            return Err(SmtError::Syntax("top-level atom outside a command".into()));
        };
        let Some(SExpr::Atom(head)) = items.first() else {
            return Err(SmtError::Syntax("empty command".into()));
        };
        match head.as_str() {
            "declare-fun" => {
                let (name, sort) = match &items[1..] {
                    [SExpr::Atom(name), SExpr::List(args), SExpr::Atom(sort)] if args.is_empty() => {
                        (name.clone(), parse_sort(sort)?)
                    }
                    _ => return Err(SmtError::Syntax("malformed declare-fun".into())),
                };
                if declared.insert(name.clone(), sort).is_some() {
                    return Err(SmtError::Syntax(format!("`{name}` declared twice")));
                }
                decls.push((name, sort));
            }
            "declare-const" => {
                let (name, sort) = match &items[1..] {
                    [SExpr::Atom(name), SExpr::Atom(sort)] => (name.clone(), parse_sort(sort)?),
                    _ => return Err(SmtError::Syntax("malformed declare-const".into())),
                };
                if declared.insert(name.clone(), sort).is_some() {
                    return Err(SmtError::Syntax(format!("`{name}` declared twice")));
                }
                decls.push((name, sort));
            }
            "assert" => {
                if items.len() != 2 {
                    return Err(SmtError::Syntax("assert takes one term".into()));
                }
                if saw_check_sat {
                    return Err(SmtError::Syntax("assert after (check-sat)".into()));
                }
                assertions.push(items[1].clone());
            }
            "check-sat" => {
                if saw_check_sat {
                    return Err(SmtError::Syntax("duplicate (check-sat)".into()));
                }
                saw_check_sat = true;
            }
            "get-value" => {
                if !saw_check_sat {
                    return Err(SmtError::Syntax("(get-value) before (check-sat)".into()));
                }
                if query.is_some() {
                    return Err(SmtError::MultipleQueries);
                }
                match &items[1..] {
                    [SExpr::List(vars)] => match vars.as_slice() {
                        [SExpr::Atom(v)] => query = Some(v.clone()),
                        _ => return Err(SmtError::MultipleQueries),
                    },
                    _ => return Err(SmtError::Syntax("malformed get-value".into())),
                }
            }
            "set-logic" | "set-info" | "set-option" | "exit" => {}
            other => return Err(SmtError::UnsupportedCommand(other.to_string())),
        }
    }

    let query = query.ok_or(SmtError::MissingQuery)?;
    if !saw_check_sat {
        return Err(SmtError::MissingQuery);
    }
    if !declared.contains_key(&query) {
        return Err(SmtError::UndeclaredSymbol(query.clone()));
    }

    // `answer` is reserved in the program language; rename on collision
    let rename = |name: &str| -> String {
        if name == ANSWER_NAME {
            format!("{ANSWER_NAME}_")
        } else {
            name.to_string()
        }
    };

    // Classify assertions into straight-line definitions and constraints.
    // A definition may read unknowns, and which names end up unknown is
    // only known after classification, so iterate the assumed-unknown set
    // to a fixpoint. Each round is order-sound on its own (a definition
    // only reads names already defined or assumed unknown), so the last
    // round's classification is valid even if iteration is cut short.
    let sort_of = |name: &str| -> Option<Sort> { declared.get(name).copied() };
    let flat_assertions: Vec<&SExpr> = assertions.iter().flat_map(flatten_and).collect();

    let mut assumed_unknown: BTreeSet<String> = BTreeSet::new();
    let mut defined: BTreeSet<String> = BTreeSet::new();
    let mut let_is_int: BTreeMap<String, bool> = BTreeMap::new();
    let mut lets: Vec<LetDecl> = Vec::new();
    let mut constraints: Vec<Constraint> = Vec::new();

    for round in 0..=8 {
        // A converged round promotes no assumed-unknown name (a promotion
        // would shrink the set), which is exactly what makes the item
        // order sound; the last permitted round forbids promotion outright
        // in case the iteration oscillates.
        let allow_promotion = round < 8;
        defined.clear();
        let_is_int.clear();
        lets.clear();
        constraints.clear();
        for part in &flat_assertions {
            let classified = classify_assertion(
                part,
                &declared,
                &defined,
                &assumed_unknown,
                allow_promotion,
                &let_is_int,
            )?;
            match classified {
                Classified::Definition { name, expr, is_int } => {
                    let renamed = rename(&name);
                    let expr = rename_answer_vars(&expr);
                    if sort_of(&name) == Some(Sort::Int) && !is_int {
                        // the sort demands integrality the expression does
                        // not guarantee; keep the definition but enforce it
                        constraints.push(Constraint::new(
                            Expr::floor(Expr::var(renamed.clone())),
                            RelOp::Eq,
                            Expr::var(renamed.clone()),
                        ));
                    }
                    let_is_int.insert(name.clone(), is_int);
                    defined.insert(name);
                    lets.push(LetDecl { name: renamed, expr });
                }
                Classified::Constraint(c) => constraints.push(Constraint {
                    rel: c.rel,
                    lhs: rename_answer_vars(&c.lhs),
                    rhs: rename_answer_vars(&c.rhs),
                }),
            }
        }
        let next_unknowns: BTreeSet<String> = declared
            .keys()
            .filter(|name| !defined.contains(*name))
            .cloned()
            .collect();
        if next_unknowns == assumed_unknown {
            break;
        }
        assumed_unknown = next_unknowns;
    }

    let mut items: Vec<Item> = Vec::new();
    for (name, sort) in &decls {
        if defined.contains(name) {
            continue;
        }
        items.push(Item::Var(VarDecl {
            name: rename(name),
            domain: match sort {
                Sort::Int => Domain::Integer,
                Sort::Real => Domain::Rational,
            },
            bounds: None,
            wheres: vec![],
        }));
    }
    items.extend(lets.into_iter().map(Item::Let));
    items.extend(constraints.into_iter().map(Item::Constraint));

    let mut p = Program::new("smt_import", items, Expr::var(rename(&query)));
    if !reader.comments.is_empty() {
        p.meta
            .insert("smt_comments".to_string(), reader.comments.join("\n"));
    }
    Ok(p)
}

fn parse_sort(s: &str) -> Result<Sort, SmtError> {
    match s {
        "Int" => Ok(Sort::Int),
        "Real" => Ok(Sort::Real),
        other => Err(SmtError::Syntax(format!("unsupported sort `{other}`"))),
    }
}

fn flatten_and(e: &SExpr) -> Vec<&SExpr> {
    if let SExpr::List(items) = e {
        if let Some(SExpr::Atom(op)) = items.first() {
            if op == "and" {
                return items[1..].iter().flat_map(flatten_and).collect();
            }
        }
    }
    vec![e]
}

enum Classified {
    Definition { name: String, expr: Expr, is_int: bool },
    Constraint(Constraint),
}

fn classify_assertion(
    e: &SExpr,
    declared: &BTreeMap<String, Sort>,
    defined: &BTreeSet<String>,
    assumed_unknown: &BTreeSet<String>,
    allow_promotion: bool,
    let_is_int: &BTreeMap<String, bool>,
) -> Result<Classified, SmtError> {
    let c = boolean_term(e, declared)?;
    if c.rel == RelOp::Eq {
        for (subject, other) in [(&c.lhs, &c.rhs), (&c.rhs, &c.lhs)] {
            if let Some((name, divisor)) = definition_target(subject) {
                let definable = declared.contains_key(&name)
                    && !defined.contains(&name)
                    && (allow_promotion || !assumed_unknown.contains(&name));
                // dependencies: already-defined names or assumed unknowns
                let deps_ok = other
                    .free_vars()
                    .iter()
                    .all(|v| defined.contains(v) || assumed_unknown.contains(v));
                let self_free = !other.free_vars().contains(&name);
                if definable && deps_ok && self_free {
                    let expr = match &divisor {
                        Some(d) => Expr::div(other.clone(), Expr::Const(d.clone())),
                        None => other.clone(),
                    };
                    let is_int = expr_is_int(&expr, declared, let_is_int);
                    return Ok(Classified::Definition { name, expr, is_int });
                }
            }
        }
    }
    Ok(Classified::Constraint(c))
}

/// Matches `v` or `(* k v)` with a literal nonzero `k`, the shapes the
/// emitter produces for definitions.
fn definition_target(e: &Expr) -> Option<(String, Option<Rational>)> {
    match e {
        Expr::Var(v) => Some((v.clone(), None)),
        Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(k), Expr::Var(v)) | (Expr::Var(v), Expr::Const(k)) if !k.is_zero() => {
                Some((v.clone(), Some(k.clone())))
            }
            _ => None,
        },
        _ => None,
    }
}

fn expr_is_int(
    e: &Expr,
    declared: &BTreeMap<String, Sort>,
    let_is_int: &BTreeMap<String, bool>,
) -> bool {
    match e {
        Expr::Const(c) => c.is_integer(),
        Expr::Var(v) => {
            let_is_int
                .get(v)
                .copied()
                .unwrap_or_else(|| declared.get(v) == Some(&Sort::Int))
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            expr_is_int(a, declared, let_is_int) && expr_is_int(b, declared, let_is_int)
        }
        Expr::Div(_, _) => false,
        Expr::Pow(a, _) => expr_is_int(a, declared, let_is_int),
        Expr::Floor(_) | Expr::Mod(_, _) => true,
        Expr::Abs(a) => expr_is_int(a, declared, let_is_int),
        Expr::Min(a, b) | Expr::Max(a, b) => {
            expr_is_int(a, declared, let_is_int) && expr_is_int(b, declared, let_is_int)
        }
        Expr::IfPositive(_, t, f) => {
            expr_is_int(t, declared, let_is_int) && expr_is_int(f, declared, let_is_int)
        }
    }
}

fn rename_answer_vars(e: &Expr) -> Expr {
    e.substitute(ANSWER_NAME, &Expr::var(format!("{ANSWER_NAME}_")))
}

/// A boolean term at the top of an assertion: a relation, or `not` of one.
fn boolean_term(e: &SExpr, declared: &BTreeMap<String, Sort>) -> Result<Constraint, SmtError> {
    let SExpr::List(items) = e else {
        return Err(SmtError::Syntax("assertion must be a relation".into()));
    };
    let Some(SExpr::Atom(op)) = items.first() else {
        return Err(SmtError::Syntax("assertion must be a relation".into()));
    };
    match op.as_str() {
        "=" | "<" | "<=" | ">" | ">=" => {
            if items.len() != 3 {
                return Err(SmtError::Syntax(format!("`{op}` takes two arguments")));
            }
            let lhs = arith_term(&items[1], declared)?;
            let rhs = arith_term(&items[2], declared)?;
            let rel = match op.as_str() {
                "=" => RelOp::Eq,
                "<" => RelOp::Lt,
                "<=" => RelOp::Le,
                ">" => RelOp::Gt,
                ">=" => RelOp::Ge,
                _ => unreachable!(),
            };
            Ok(Constraint::new(lhs, rel, rhs))
        }
        "not" => {
            if items.len() != 2 {
                return Err(SmtError::Syntax("`not` takes one argument".into()));
            }
            let inner = boolean_term(&items[1], declared)?;
            let rel = match inner.rel {
                RelOp::Eq => RelOp::Ne,
                RelOp::Ne => RelOp::Eq,
                RelOp::Lt => RelOp::Ge,
                RelOp::Le => RelOp::Gt,
                RelOp::Gt => RelOp::Le,
                RelOp::Ge => RelOp::Lt,
            };
            Ok(Constraint::new(inner.lhs, rel, inner.rhs))
        }
        other => Err(SmtError::Syntax(format!(
            "unsupported top-level boolean operator `{other}`"
        ))),
    }
}

fn arith_term(e: &SExpr, declared: &BTreeMap<String, Sort>) -> Result<Expr, SmtError> {
    match e {
        SExpr::Atom(a) => atom_term(a, declared),
        SExpr::List(items) => {
            let Some(SExpr::Atom(op)) = items.first() else {
                return Err(SmtError::Syntax("empty application".into()));
            };
            // ite carries a boolean condition, handled separately
            if op == "ite" {
                if items.len() != 4 {
                    return Err(SmtError::Syntax("ite takes three arguments".into()));
                }
                let then = arith_term(&items[2], declared)?;
                let otherwise = arith_term(&items[3], declared)?;
                return lower_ite(&items[1], then, otherwise, declared);
            }
            let args: Vec<Expr> = items[1..]
                .iter()
                .map(|t| arith_term(t, declared))
                .collect::<Result<_, _>>()?;
            match (op.as_str(), args.len()) {
                ("+", n) if n >= 2 => Ok(fold_left(args, Expr::add)),
                ("-", 1) => Ok(match args.into_iter().next().unwrap() {
                    Expr::Const(c) => Expr::Const(-c),
                    other => Expr::sub(Expr::int(0), other),
                }),
                ("-", n) if n >= 2 => Ok(fold_left(args, Expr::sub)),
                ("*", n) if n >= 2 => Ok(fold_left(args, Expr::mul)),
                ("div", 2) => {
                    let mut it = args.into_iter();
                    let a = it.next().unwrap();
                    let b = it.next().unwrap();
                    // Euclidean quotient: (a - mod(a, b)) / b
                    Ok(Expr::div(
                        Expr::sub(a.clone(), Expr::Mod(Box::new(a), Box::new(b.clone()))),
                        b,
                    ))
                }
                ("mod", 2) => {
                    let mut it = args.into_iter();
                    Ok(Expr::Mod(
                        Box::new(it.next().unwrap()),
                        Box::new(it.next().unwrap()),
                    ))
                }
                ("to_int", 1) => Ok(Expr::floor(args.into_iter().next().unwrap())),
                (other, n) => Err(SmtError::Syntax(format!(
                    "unsupported operator `{other}` with {n} arguments"
                ))),
            }
        }
    }
}

fn fold_left(args: Vec<Expr>, f: impl Fn(Expr, Expr) -> Expr) -> Expr {
    let mut it = args.into_iter();
    let first = it.next().expect("nonempty");
    it.fold(first, f)
}

fn atom_term(a: &str, declared: &BTreeMap<String, Sort>) -> Result<Expr, SmtError> {
    if a.starts_with(|c: char| c.is_ascii_digit()) {
        let r = Rational::parse(a).ok_or_else(|| SmtError::Syntax(format!("bad numeral `{a}`")))?;
        return Ok(Expr::Const(r));
    }
    if let Some(stripped) = a.strip_prefix('-') {
        if stripped.starts_with(|c: char| c.is_ascii_digit()) {
            let r = Rational::parse(a)
                .ok_or_else(|| SmtError::Syntax(format!("bad numeral `{a}`")))?;
            return Ok(Expr::Const(r));
        }
    }
    if BigInt::from_str(a).is_ok() {
        return Ok(Expr::Const(Rational::parse(a).unwrap()));
    }
    if declared.contains_key(a) {
        Ok(Expr::var(a))
    } else {
        Err(SmtError::UndeclaredSymbol(a.to_string()))
    }
}

/// Lowers `(ite cond then else)` to arithmetic selection on the sign of a
/// difference. `and`/`or`/`not` in the condition nest the selection.
fn lower_ite(
    cond: &SExpr,
    then: Expr,
    otherwise: Expr,
    declared: &BTreeMap<String, Sort>,
) -> Result<Expr, SmtError> {
    let SExpr::List(items) = cond else {
        return Err(SmtError::Syntax("ite condition must be an application".into()));
    };
    let Some(SExpr::Atom(op)) = items.first() else {
        return Err(SmtError::Syntax("ite condition must be an application".into()));
    };
    let ifpos = |c: Expr, t: Expr, e: Expr| Expr::IfPositive(Box::new(c), Box::new(t), Box::new(e));
    match (op.as_str(), items.len()) {
        (">", 3) | ("<", 3) | (">=", 3) | ("<=", 3) | ("=", 3) => {
            let a = arith_term(&items[1], declared)?;
            let b = arith_term(&items[2], declared)?;
            Ok(match op.as_str() {
                ">" => ifpos(Expr::sub(a, b), then, otherwise),
                "<" => ifpos(Expr::sub(b, a), then, otherwise),
                // a >= b  <=>  not (b - a > 0)
                ">=" => ifpos(Expr::sub(b, a), otherwise, then),
                "<=" => ifpos(Expr::sub(a, b), otherwise, then),
                // equal when |a - b| is not positive
                "=" => ifpos(Expr::Abs(Box::new(Expr::sub(a, b))), otherwise, then),
                _ => unreachable!(),
            })
        }
        ("not", 2) => lower_ite(&items[1], otherwise, then, declared),
        ("and", n) if n >= 3 => {
            let mut acc = then;
            for c in items[1..].iter().rev() {
                acc = lower_ite(c, acc, otherwise.clone(), declared)?;
            }
            Ok(acc)
        }
        ("or", n) if n >= 3 => {
            let mut acc = otherwise;
            for c in items[1..].iter().rev() {
                acc = lower_ite(c, then.clone(), acc, declared)?;
            }
            Ok(acc)
        }
        (other, _) => Err(SmtError::Syntax(format!(
            "unsupported ite condition `{other}`"
        ))),
    }
}
