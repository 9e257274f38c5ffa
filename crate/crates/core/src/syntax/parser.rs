//! Recursive-descent parser for `.trait`, `.role` and `.inter` files.
//!
//! Term operator precedence, loosest first:
//! `<=>`, `=>` (right), `\/`, `/\`, prefix `~`, comparisons
//! (`= ~= < <= > >= in notin`), `+ -`, `*`, prefix `-`, `!`, then the
//! postfix forms `.field`, `^`, `'` and `\state`. `forall` and
//! `if .. then .. else` extend as far to the right as possible.
//! Actions: `;` loosest, then `[]`, then `/\`; `let`, `if`, `while`
//! and the distributed forms extend as far to the right as possible.

use crate::diag::Span;
use crate::sort::Sort;
use crate::syntax::ast::*;
use crate::syntax::lexer::{tokenize, Tok, Token};
use crate::syntax::ParseError;

const RESERVED: &[&str] = &[
    "trait",
    "includes",
    "introduces",
    "asserts",
    "implies",
    "tuple",
    "of",
    "partitioned",
    "generated",
    "by",
    "forall",
    "for",
    "role",
    "specification",
    "uses",
    "requires",
    "modifies",
    "ensures",
    "constructs",
    "contructs",
    "interaction",
    "class",
    "method",
    "let",
    "in",
    "notin",
    "if",
    "then",
    "else",
    "while",
    "do",
];

const SECTION_KWS: &[&str] = &["includes", "introduces", "asserts", "implies"];

pub fn parse_trait(src: &str) -> Result<TraitUnit, ParseError> {
    let mut p = Parser::new(src)?;
    let unit = p.trait_unit()?;
    p.expect_eof()?;
    Ok(unit)
}

pub fn parse_role(src: &str) -> Result<RoleUnit, ParseError> {
    let mut p = Parser::new(src)?;
    let unit = p.role_unit()?;
    p.expect_eof()?;
    Ok(unit)
}

pub fn parse_interaction(src: &str) -> Result<InteractionUnit, ParseError> {
    let mut p = Parser::new(src)?;
    let unit = p.interaction_unit()?;
    p.expect_eof()?;
    Ok(unit)
}

/// Parses a single tier-1 term (used for scenario values and assertions).
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

/// Parses a single action; bare receivers are not scope-checked.
pub fn parse_action(src: &str) -> Result<Action, ParseError> {
    let mut p = Parser::new(src)?;
    p.check_scope = false;
    let a = p.action()?;
    p.expect_eof()?;
    Ok(a)
}

pub fn parse_unit(src: &str, kind: UnitKind) -> Result<SourceUnit, ParseError> {
    Ok(match kind {
        UnitKind::Trait => SourceUnit::Trait(parse_trait(src)?),
        UnitKind::Role => SourceUnit::Role(parse_role(src)?),
        UnitKind::Interaction => SourceUnit::Interaction(parse_interaction(src)?),
    })
}

/// Parses a unit whose kind is determined from its header line.
pub fn parse_any(src: &str) -> Result<SourceUnit, ParseError> {
    let toks = tokenize(src)?;
    let mut i = 0;
    while i < toks.len() && toks[i].tok != Tok::Colon {
        i += 1;
    }
    let kind = match toks.get(i + 1).map(|t| &t.tok) {
        Some(Tok::Ident(w)) if w == "trait" => UnitKind::Trait,
        Some(Tok::Ident(w)) if w == "role" => UnitKind::Role,
        Some(Tok::Ident(w)) if w == "interaction" => UnitKind::Interaction,
        _ => {
            let span = toks.get(i + 1).map(|t| t.span).unwrap_or_default();
            return Err(ParseError::new(
                span,
                "cannot determine unit kind from header",
                vec!["trait".into(), "role".into(), "interaction".into()],
            ));
        }
    };
    parse_unit(src, kind)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    no_in: bool,
    check_scope: bool,
    scope: Vec<String>,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
            no_in: false,
            check_scope: true,
            scope: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek() == tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expected(&self, what: &[&str]) -> ParseError {
        ParseError::new(
            self.span(),
            format!("unexpected {}", self.peek().describe()),
            what.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn expect(&mut self, tok: &Tok) -> Result<Span, ParseError> {
        if self.at(tok) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&[&format!("`{}`", tok.symbol())]))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if self.at(&Tok::Eof) {
            Ok(())
        } else {
            Err(self.expected(&["end of input"]))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Span, ParseError> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.expected(&[&format!("`{kw}`")]))
        }
    }

    fn at_plain_ident(&self) -> bool {
        matches!(self.peek(), Tok::Ident(w) if !RESERVED.contains(&w.as_str()))
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => {
                let span = self.bump().span;
                Ok((w, span))
            }
            Tok::Ident(w) => Err(ParseError::new(
                self.span(),
                format!("expected identifier, found keyword `{w}`"),
                vec!["identifier".into()],
            )),
            _ => Err(self.expected(&["identifier"])),
        }
    }

    fn sort(&mut self) -> Result<Sort, ParseError> {
        let (name, _) = self.ident()?;
        let mut args = Vec::new();
        if self.eat(&Tok::LBrack) {
            loop {
                args.push(self.sort()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RBrack)?;
        }
        Ok(Sort::applied(name, args))
    }

    /// `a, b : S, c : T`; stops when the next token cannot continue the list.
    fn var_decls(&mut self) -> Result<Vec<VarDecl>, ParseError> {
        let mut out = Vec::new();
        loop {
            let mut names = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                names.push(self.ident()?);
            }
            self.expect(&Tok::Colon)?;
            let sort = self.sort()?;
            out.extend(names.into_iter().map(|(name, span)| VarDecl {
                name,
                sort: sort.clone(),
                span,
            }));
            if self.at(&Tok::Comma) && matches!(self.peek_at(1), Tok::Ident(_)) {
                self.bump();
            } else {
                break;
            }
        }
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // Terms

    fn term(&mut self) -> Result<Term, ParseError> {
        self.iff()
    }

    fn binary(span: Span, op: &str, a: Term, b: Term) -> Term {
        Term::new(TermKind::App(op.to_string(), vec![a, b]), span)
    }

    fn iff(&mut self) -> Result<Term, ParseError> {
        let lhs = self.implication()?;
        if self.at(&Tok::Iff) {
            let span = self.bump().span;
            let rhs = self.implication()?;
            return Ok(Self::binary(span, "<=>", lhs, rhs));
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> Result<Term, ParseError> {
        let lhs = self.disjunction()?;
        if self.at(&Tok::Implies) {
            let span = self.bump().span;
            let rhs = self.implication()?;
            return Ok(Self::binary(span, "=>", lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.conjunction()?;
        while self.at(&Tok::Or) {
            let span = self.bump().span;
            let rhs = self.conjunction()?;
            lhs = Self::binary(span, "\\/", lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.negation()?;
        while self.at(&Tok::And) {
            let span = self.bump().span;
            let rhs = self.negation()?;
            lhs = Self::binary(span, "/\\", lhs, rhs);
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> Result<Term, ParseError> {
        if self.at(&Tok::Tilde) {
            let span = self.bump().span;
            let inner = self.negation()?;
            return Ok(Term::new(TermKind::App("~".into(), vec![inner]), span));
        }
        self.comparison()
    }

    fn comparison_op(&self) -> Option<&'static str> {
        Some(match self.peek() {
            Tok::Eq => "=",
            Tok::Neq => "~=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Ident(w) if w == "in" && !self.no_in => "in",
            Tok::Ident(w) if w == "notin" => "notin",
            _ => return None,
        })
    }

    fn comparison(&mut self) -> Result<Term, ParseError> {
        let lhs = self.additive()?;
        if let Some(op) = self.comparison_op() {
            let span = self.bump().span;
            let rhs = self.additive()?;
            return Ok(Self::binary(span, op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => "+",
                Tok::Minus => "-",
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.multiplicative()?;
            lhs = Self::binary(span, op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.unary_minus()?;
        while self.at(&Tok::Star) {
            let span = self.bump().span;
            let rhs = self.unary_minus()?;
            lhs = Self::binary(span, "*", lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_minus(&mut self) -> Result<Term, ParseError> {
        if self.at(&Tok::Minus) {
            let span = self.bump().span;
            let inner = self.unary_minus()?;
            if let TermKind::Int(n) = inner.kind {
                return Ok(Term::new(TermKind::Int(-n), span));
            }
            return Ok(Term::new(TermKind::App("-".into(), vec![inner]), span));
        }
        self.bang()
    }

    fn bang(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.postfix()?;
        while self.at(&Tok::Bang) {
            let span = self.bump().span;
            let rhs = self.postfix()?;
            lhs = Self::binary(span, "!", lhs, rhs);
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Term, ParseError> {
        let mut t = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot if matches!(self.peek_at(1), Tok::Ident(_)) && *self.peek_at(2) != Tok::LParen => {
                    let span = self.bump().span;
                    let (field, _) = self.ident()?;
                    t = Term::new(TermKind::Proj(Box::new(t), field), span);
                }
                Tok::Caret => {
                    let span = self.bump().span;
                    t = Term::new(TermKind::Pre(Box::new(t)), span);
                }
                Tok::Prime => {
                    let span = self.bump().span;
                    t = Term::new(TermKind::Post(Box::new(t)), span);
                }
                Tok::Backslash => {
                    let span = self.bump().span;
                    let (st, _) = self.ident()?;
                    t = Term::new(TermKind::InState(Box::new(t), st), span);
                }
                _ => break,
            }
        }
        Ok(t)
    }

    fn with_in_allowed<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ParseError>) -> Result<T, ParseError> {
        let saved = self.no_in;
        self.no_in = false;
        let r = f(self);
        self.no_in = saved;
        r
    }

    fn term_list(&mut self, close: &Tok) -> Result<Vec<Term>, ParseError> {
        self.with_in_allowed(|p| {
            let mut args = Vec::new();
            if !p.at(close) {
                loop {
                    args.push(p.term()?);
                    if !p.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            p.expect(close)?;
            Ok(args)
        })
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Term::new(TermKind::Int(n), span))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::new(TermKind::Str(s), span))
            }
            Tok::LParen => {
                self.bump();
                let t = self.with_in_allowed(|p| p.term())?;
                self.expect(&Tok::RParen)?;
                Ok(t)
            }
            Tok::LBrack => {
                self.bump();
                let fields = self.term_list(&Tok::RBrack)?;
                if fields.is_empty() {
                    return Err(ParseError::new(span, "tuple literal needs at least one field", vec![]));
                }
                let sort = if self.at(&Tok::Colon) && matches!(self.peek_at(1), Tok::Ident(_)) {
                    self.bump();
                    Some(self.sort()?)
                } else {
                    None
                };
                Ok(Term::new(TermKind::Tuple(fields, sort), span))
            }
            Tok::Bar => {
                self.bump();
                let t = self.with_in_allowed(|p| p.term())?;
                self.expect(&Tok::Bar)?;
                Ok(Term::new(TermKind::Card(Box::new(t)), span))
            }
            Tok::Ident(w) if w == "forall" => {
                self.bump();
                let vars = self.var_decls()?;
                let body = self.term()?;
                Ok(Term::new(TermKind::Forall(vars, Box::new(body)), span))
            }
            Tok::Ident(w) if w == "if" => {
                self.bump();
                let c = self.term()?;
                self.expect_kw("then")?;
                let a = self.term()?;
                self.expect_kw("else")?;
                let b = self.term()?;
                Ok(Term::new(TermKind::Ite(Box::new(c), Box::new(a), Box::new(b)), span))
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident()?;
                if self.at(&Tok::LParen) {
                    self.bump();
                    let args = self.term_list(&Tok::RParen)?;
                    Ok(Term::new(TermKind::App(name, args), span))
                } else {
                    Ok(Term::new(TermKind::Id(name), span))
                }
            }
            _ => Err(self.expected(&["term"])),
        }
    }

    // -----------------------------------------------------------------------
    // Traits

    fn trait_unit(&mut self) -> Result<TraitUnit, ParseError> {
        let (name, span) = self.ident()?;
        let mut params = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                params.push(self.ident()?.0);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
        }
        self.expect(&Tok::Colon)?;
        self.expect_kw("trait")?;
        let mut unit = TraitUnit {
            name,
            params,
            includes: Vec::new(),
            tuples: Vec::new(),
            introduces: Vec::new(),
            partitions: Vec::new(),
            generators: Vec::new(),
            asserts: Vec::new(),
            implies: Vec::new(),
            span,
        };
        loop {
            if self.at(&Tok::Eof) {
                break;
            } else if self.eat_kw("includes") {
                loop {
                    unit.includes.push(self.include()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.eat(&Tok::Semi);
            } else if self.eat_kw("introduces") {
                while self.at_op_decl() {
                    for decl in self.op_decl()? {
                        if unit
                            .introduces
                            .iter()
                            .any(|d| d.name == decl.name && d.args == decl.args && d.result == decl.result)
                        {
                            return Err(ParseError::new(
                                decl.span,
                                format!("duplicate declaration of operator `{}` with identical signature", decl.name),
                                vec![],
                            ));
                        }
                        unit.introduces.push(decl);
                    }
                    self.eat(&Tok::Semi);
                }
            } else if self.eat_kw("asserts") {
                self.assert_items(&mut unit, false)?;
            } else if self.eat_kw("implies") {
                self.assert_items(&mut unit, true)?;
            } else if self.at_plain_ident() {
                let span = self.span();
                let sort = self.sort()?;
                self.expect_kw("tuple")?;
                self.expect_kw("of")?;
                let fields = self
                    .var_decls()?
                    .into_iter()
                    .map(|v| Field {
                        name: v.name,
                        sort: v.sort,
                    })
                    .collect();
                self.eat(&Tok::Semi);
                unit.tuples.push(TupleDecl { sort, fields, span });
            } else {
                return Err(self.expected(&[
                    "`includes`",
                    "`introduces`",
                    "`asserts`",
                    "`implies`",
                    "tuple declaration",
                    "end of input",
                ]));
            }
        }
        Ok(unit)
    }

    fn include(&mut self) -> Result<Include, ParseError> {
        let (trait_name, span) = self.ident()?;
        let mut actuals = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                let first = self.sort()?;
                if self.eat_kw("for") {
                    let old = self.sort()?;
                    actuals.push(Actual::Rename { new: first, old });
                } else {
                    actuals.push(Actual::Positional(first));
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
        }
        Ok(Include {
            trait_name,
            actuals,
            span,
        })
    }

    fn op_symbol(&self) -> Option<&'static str> {
        Some(match self.peek() {
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Eq => "=",
            Tok::Neq => "~=",
            Tok::And => "/\\",
            Tok::Or => "\\/",
            Tok::Implies => "=>",
            Tok::Iff => "<=>",
            Tok::Bang => "!",
            Tok::Tilde => "~",
            Tok::Ident(w) if w == "in" => "in",
            Tok::Ident(w) if w == "notin" => "notin",
            _ => return None,
        })
    }

    fn at_op_decl(&self) -> bool {
        match self.peek() {
            Tok::Mixfix => true,
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => {
                matches!(self.peek_at(1), Tok::Colon | Tok::Comma)
            }
            _ => self.op_symbol().is_some() && *self.peek_at(1) == Tok::Mixfix,
        }
    }

    fn op_name(&mut self) -> Result<(String, Fixity, Span), ParseError> {
        let span = self.span();
        if self.eat(&Tok::Mixfix) {
            let Some(sym) = self.op_symbol() else {
                return Err(self.expected(&["operator symbol"]));
            };
            self.bump();
            self.expect(&Tok::Mixfix)?;
            return Ok((sym.to_string(), Fixity::Infix, span));
        }
        if let Some(sym) = self.op_symbol() {
            if *self.peek_at(1) == Tok::Mixfix {
                self.bump();
                self.bump();
                return Ok((sym.to_string(), Fixity::Prefix, span));
            }
        }
        let (name, span) = self.ident()?;
        Ok((name, Fixity::Plain, span))
    }

    fn op_decl(&mut self) -> Result<Vec<OpDecl>, ParseError> {
        let mut names = vec![self.op_name()?];
        while self.eat(&Tok::Comma) {
            names.push(self.op_name()?);
        }
        self.expect(&Tok::Colon)?;
        let mut args = Vec::new();
        if !self.at(&Tok::Arrow) {
            loop {
                args.push(self.sort()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::Arrow)?;
        let result = self.sort()?;
        Ok(names
            .into_iter()
            .map(|(name, fixity, span)| OpDecl {
                name,
                fixity,
                args: args.clone(),
                result: result.clone(),
                span,
            })
            .collect())
    }

    fn at_section_end(&self) -> bool {
        self.at(&Tok::Eof) || SECTION_KWS.iter().any(|k| self.is_kw(k))
    }

    /// Tries `Sort partitioned by ...` / `Sort generated by ...` without consuming on failure.
    fn sort_ops(&mut self) -> Result<Option<(bool, SortOps)>, ParseError> {
        if !self.at_plain_ident() {
            return Ok(None);
        }
        let save = self.pos;
        let span = self.span();
        let Ok(sort) = self.sort() else {
            self.pos = save;
            return Ok(None);
        };
        let partitioned = if self.is_kw("partitioned") {
            true
        } else if self.is_kw("generated") {
            false
        } else {
            self.pos = save;
            return Ok(None);
        };
        self.bump();
        self.expect_kw("by")?;
        let mut ops = Vec::new();
        loop {
            ops.push(self.op_name()?.0);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.eat(&Tok::Semi);
        Ok(Some((partitioned, SortOps { sort, ops, span })))
    }

    fn assert_items(&mut self, unit: &mut TraitUnit, implies: bool) -> Result<(), ParseError> {
        let mut blocks: Vec<EqBlock> = Vec::new();
        while !self.at_section_end() {
            if self.eat_kw("forall") {
                let vars = self.var_decls()?;
                blocks.push(EqBlock {
                    vars,
                    equations: Vec::new(),
                });
                continue;
            }
            if !implies {
                if let Some((partitioned, ops)) = self.sort_ops()? {
                    if partitioned {
                        unit.partitions.push(ops);
                    } else {
                        unit.generators.push(ops);
                    }
                    continue;
                }
            }
            let span = self.span();
            let lhs = self.term()?;
            let rhs = if self.eat(&Tok::EqEq) { Some(self.term()?) } else { None };
            self.eat(&Tok::Semi);
            if blocks.is_empty() {
                blocks.push(EqBlock {
                    vars: Vec::new(),
                    equations: Vec::new(),
                });
            }
            blocks.last_mut().unwrap().equations.push(Equation { lhs, rhs, span });
        }
        let target = if implies { &mut unit.implies } else { &mut unit.asserts };
        target.extend(blocks);
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Role specifications

    fn role_unit(&mut self) -> Result<RoleUnit, ParseError> {
        let (name, span) = self.ident()?;
        self.expect(&Tok::Colon)?;
        self.expect_kw("role")?;
        self.expect_kw("specification")?;
        if !self.is_kw("uses") {
            return Err(ParseError::new(self.span(), "missing `uses` clause", vec!["`uses`".into()]));
        }
        let uses_span = self.bump().span;
        let (uses, _) = self.ident()?;
        self.eat(&Tok::Semi);
        let mut methods = Vec::new();
        while !self.at(&Tok::Eof) {
            methods.push(self.method_spec()?);
        }
        Ok(RoleUnit {
            name,
            uses,
            uses_span,
            methods,
            span,
        })
    }

    fn params(&mut self) -> Result<Vec<Param>, ParseError> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                let (name, span) = self.ident()?;
                let sort = if self.eat(&Tok::Colon) { Some(self.sort()?) } else { None };
                out.push(Param { name, sort, span });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    fn method_spec(&mut self) -> Result<MethodSpec, ParseError> {
        let ret = if self.at_plain_ident() && *self.peek_at(1) != Tok::LParen {
            Some(self.sort()?)
        } else {
            None
        };
        let (name, span) = self.ident()?;
        let params = self.params()?;
        self.expect(&Tok::LBrace)?;
        let mut constructs = None;
        let mut requires = None;
        let mut modifies = None;
        let mut ensures = None;
        while !self.at(&Tok::RBrace) {
            let kw_span = self.span();
            let kw = match self.peek() {
                Tok::Ident(w) => w.clone(),
                _ => return Err(self.expected(&["clause keyword", "`}`"])),
            };
            let duplicate = |what: &str| ParseError::new(kw_span, format!("duplicate `{what}` clause"), vec![]);
            match kw.as_str() {
                "requires" => {
                    self.bump();
                    if requires.is_some() {
                        return Err(duplicate("requires"));
                    }
                    requires = Some(self.term()?);
                }
                "modifies" => {
                    self.bump();
                    if modifies.is_some() {
                        return Err(duplicate("modifies"));
                    }
                    modifies = Some(self.frame()?);
                }
                "ensures" => {
                    self.bump();
                    if ensures.is_some() {
                        return Err(duplicate("ensures"));
                    }
                    ensures = Some(self.term()?);
                }
                "constructs" | "contructs" => {
                    self.bump();
                    if constructs.is_some() {
                        return Err(duplicate("constructs"));
                    }
                    self.expect_kw_ident("self")?;
                    constructs = Some(if kw == "constructs" {
                        ConstructsKw::Constructs
                    } else {
                        ConstructsKw::Contructs
                    });
                }
                other => {
                    return Err(ParseError::new(
                        kw_span,
                        format!("unknown clause keyword `{other}`"),
                        vec![
                            "`requires`".into(),
                            "`modifies`".into(),
                            "`ensures`".into(),
                            "`constructs`".into(),
                        ],
                    ));
                }
            }
            self.eat(&Tok::Semi);
        }
        self.expect(&Tok::RBrace)?;
        let Some(ensures) = ensures else {
            return Err(ParseError::new(
                span,
                format!("method `{name}` is missing its `ensures` clause"),
                vec!["`ensures`".into()],
            ));
        };
        Ok(MethodSpec {
            name,
            params,
            ret,
            constructs,
            requires,
            modifies: modifies.unwrap_or_default(),
            ensures,
            span,
        })
    }

    fn expect_kw_ident(&mut self, word: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(w) if w == word => {
                self.bump();
                Ok(())
            }
            _ => Err(self.expected(&[&format!("`{word}`")])),
        }
    }

    /// Frame items separated by `,` or `/\`.
    fn frame(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut items = vec![self.negation()?];
        while self.eat(&Tok::Comma) || self.eat(&Tok::And) {
            items.push(self.negation()?);
        }
        Ok(items)
    }

    // -----------------------------------------------------------------------
    // Interaction specifications

    fn interaction_unit(&mut self) -> Result<InteractionUnit, ParseError> {
        let (name, span) = self.ident()?;
        self.expect(&Tok::Colon)?;
        self.expect_kw("interaction")?;
        self.eat_kw("specification");
        let mut classes = Vec::new();
        while !self.at(&Tok::Eof) {
            let cspan = self.expect_kw("class")?;
            let (cname, _) = self.ident()?;
            self.expect(&Tok::LBrace)?;
            let mut methods = Vec::new();
            while !self.at(&Tok::RBrace) {
                methods.push(self.method_def()?);
            }
            self.expect(&Tok::RBrace)?;
            classes.push(ClassDef {
                name: cname,
                methods,
                span: cspan,
            });
        }
        Ok(InteractionUnit { name, classes, span })
    }

    fn method_def(&mut self) -> Result<MethodDef, ParseError> {
        self.expect_kw("method")?;
        let (name, span) = self.ident()?;
        let params = self.params()?;
        self.scope = std::iter::once("self".to_string())
            .chain(params.iter().map(|p| p.name.clone()))
            .collect();
        self.expect(&Tok::LBrace)?;
        let body = self.action()?;
        self.expect(&Tok::RBrace)?;
        Ok(MethodDef {
            name,
            params,
            body,
            span,
        })
    }

    fn action(&mut self) -> Result<Action, ParseError> {
        let mut lhs = self.choice_action()?;
        while self.at(&Tok::Semi) {
            let span = self.bump().span;
            let rhs = self.choice_action()?;
            lhs = Action::new(ActionKind::Seq(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn choice_action(&mut self) -> Result<Action, ParseError> {
        let mut lhs = self.indep_action()?;
        while self.at(&Tok::Choice) {
            let span = self.bump().span;
            let rhs = self.indep_action()?;
            lhs = Action::new(ActionKind::Choice(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn indep_action(&mut self) -> Result<Action, ParseError> {
        let mut lhs = self.unit_action()?;
        while self.at(&Tok::And) {
            let span = self.bump().span;
            let rhs = self.unit_action()?;
            lhs = Action::new(ActionKind::Indep(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn scoped<T>(&mut self, var: &str, f: impl FnOnce(&mut Self) -> Result<T, ParseError>) -> Result<T, ParseError> {
        self.scope.push(var.to_string());
        let r = f(self);
        self.scope.pop();
        r
    }

    fn unit_action(&mut self) -> Result<Action, ParseError> {
        let span = self.span();
        if self.eat(&Tok::LParen) {
            let a = self.action()?;
            self.expect(&Tok::RParen)?;
            return Ok(a);
        }
        if self.eat_kw("let") {
            let (var, _) = self.ident()?;
            self.expect(&Tok::Colon)?;
            let sort = self.sort()?;
            self.expect(&Tok::Eq)?;
            let saved = self.no_in;
            self.no_in = true;
            let source = self.let_source();
            self.no_in = saved;
            let source = source?;
            self.expect_kw("in")?;
            let body = self.scoped(&var, |p| p.action())?;
            return Ok(Action::new(
                ActionKind::Let {
                    var,
                    sort,
                    source,
                    body: Box::new(body),
                },
                span,
            ));
        }
        if self.eat_kw("if") {
            let guard = self.term()?;
            self.expect_kw("then")?;
            let body = self.action()?;
            return Ok(Action::new(
                ActionKind::If {
                    guard,
                    body: Box::new(body),
                },
                span,
            ));
        }
        if self.eat_kw("while") {
            let guard = self.term()?;
            self.expect_kw("do")?;
            let body = self.action()?;
            return Ok(Action::new(
                ActionKind::While {
                    guard,
                    body: Box::new(body),
                },
                span,
            ));
        }
        if self.at(&Tok::DistOpen) || self.at(&Tok::ChoiceOpen) {
            let indep = self.bump().tok == Tok::DistOpen;
            let (var, _) = self.ident()?;
            self.expect_kw("in")?;
            let set = self.term()?;
            self.expect(if indep { &Tok::DistClose } else { &Tok::ChoiceClose })?;
            let body = Box::new(self.scoped(&var, |p| p.action())?);
            let kind = if indep {
                ActionKind::DistIndep { var, set, body }
            } else {
                ActionKind::DistChoice { var, set, body }
            };
            return Ok(Action::new(kind, span));
        }
        self.invocation()
    }

    fn method_call_ahead(&self) -> bool {
        self.at(&Tok::Dot) && matches!(self.peek_at(1), Tok::Ident(_)) && *self.peek_at(2) == Tok::LParen
    }

    fn check_receiver(&self, t: &Term) -> Result<(), ParseError> {
        if let TermKind::Id(name) = &t.kind {
            if self.check_scope && !self.scope.contains(name) {
                return Err(ParseError::new(
                    t.span,
                    format!("unbound instance variable `{name}`"),
                    vec![],
                ));
            }
        }
        Ok(())
    }

    fn invocation(&mut self) -> Result<Action, ParseError> {
        let span = self.span();
        let t = self.postfix()?;
        if self.method_call_ahead() {
            self.check_receiver(&t)?;
            self.bump();
            let (method, _) = self.ident()?;
            self.expect(&Tok::LParen)?;
            let args = self.term_list(&Tok::RParen)?;
            return Ok(Action::new(
                ActionKind::Invoke {
                    receiver: Some(t),
                    method,
                    args,
                },
                span,
            ));
        }
        match t.kind {
            TermKind::App(method, args) => Ok(Action::new(
                ActionKind::Invoke {
                    receiver: None,
                    method,
                    args,
                },
                span,
            )),
            _ => Err(ParseError::new(span, "expected a method invocation", vec!["invocation".into()])),
        }
    }

    fn let_source(&mut self) -> Result<LetSource, ParseError> {
        let span = self.span();
        let t = self.term()?;
        if self.method_call_ahead() {
            self.check_receiver(&t)?;
            self.bump();
            let (method, _) = self.ident()?;
            self.expect(&Tok::LParen)?;
            let args = self.term_list(&Tok::RParen)?;
            return Ok(LetSource::Invoke(Box::new(Action::new(
                ActionKind::Invoke {
                    receiver: Some(t),
                    method,
                    args,
                },
                span,
            ))));
        }
        Ok(LetSource::Term(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_trait() {
        let t = parse_trait("T : trait introduces c : -> S").unwrap();
        assert_eq!(t.name, "T");
        assert_eq!(t.introduces.len(), 1);
        assert!(t.introduces[0].args.is_empty());
        assert_eq!(t.introduces[0].result, Sort::simple("S"));
        assert!(t.asserts.is_empty() && t.implies.is_empty());
    }

    #[test]
    fn empty_trait() {
        let t = parse_trait("Empty : trait").unwrap();
        assert!(t.introduces.is_empty());
    }

    #[test]
    fn precedence() {
        let t = parse_term("a = b /\\ ~c => d \\/ e").unwrap();
        let TermKind::App(op, args) = &t.kind else { panic!() };
        assert_eq!(op, "=>");
        assert!(matches!(&args[0].kind, TermKind::App(o, _) if o == "/\\"));
        assert!(matches!(&args[1].kind, TermKind::App(o, _) if o == "\\/"));
    }

    #[test]
    fn arithmetic_and_projection() {
        let t = parse_term("(3600 * t.hour) + 60 * t.minute + t.second").unwrap();
        let TermKind::App(op, args) = &t.kind else { panic!() };
        assert_eq!(op, "+");
        assert!(matches!(&args[1].kind, TermKind::Proj(_, f) if f == "second"));
    }

    #[test]
    fn negative_literal_folds() {
        assert_eq!(parse_term("-18000").unwrap().kind, TermKind::Int(-18000));
        assert!(matches!(parse_term("a - 1").unwrap().kind, TermKind::App(ref o, _) if o == "-"));
    }

    #[test]
    fn state_forms() {
        let t = parse_term("result = toInt(currentTime(self\\any))").unwrap();
        let mut saw_instate = false;
        t.visit(&mut |t| {
            if let TermKind::InState(_, st) = &t.kind {
                saw_instate = st == "any";
            }
        });
        assert!(saw_instate);
        assert!(matches!(parse_term("self'").unwrap().kind, TermKind::Post(_)));
        assert!(matches!(parse_term("self^").unwrap().kind, TermKind::Pre(_)));
    }

    #[test]
    fn bang_binds_tighter_than_application_args() {
        let t = parse_term("isUpToDate(m ! st, z ! st)").unwrap();
        let TermKind::App(_, args) = &t.kind else { panic!() };
        assert!(matches!(&args[0].kind, TermKind::App(o, _) if o == "!"));
    }

    #[test]
    fn tuple_with_ascription() {
        let t = parse_term("[1, 2, 3]:Time").unwrap();
        assert!(matches!(t.kind, TermKind::Tuple(ref f, Some(ref s)) if f.len() == 3 && s.is("Time")));
    }

    #[test]
    fn forall_term() {
        let t = parse_term("forall z:ZonalClock (z in zonalClocksOf(self) => isConsistent(self, z, post))").unwrap();
        assert!(matches!(t.kind, TermKind::Forall(ref v, _) if v.len() == 1 && v[0].sort.is("ZonalClock")));
    }

    #[test]
    fn duplicate_operator_rejected() {
        let e = parse_trait("T : trait introduces f : S -> S\n f : S -> S").unwrap_err();
        assert!(e.message.contains("duplicate"));
        assert_eq!(e.span.line, 2);
    }

    #[test]
    fn overload_with_distinct_signature_accepted() {
        parse_trait("T : trait introduces f : S -> S\n f : U -> S").unwrap();
    }

    #[test]
    fn syntax_error_has_position_and_expectations() {
        let e = parse_trait("T : trait\nintroduces\n  f : S ->").unwrap_err();
        assert_eq!(e.span.line, 3);
        assert!(!e.expected.is_empty());
    }

    #[test]
    fn role_missing_ensures() {
        let e = parse_role("R : role specification uses T\n M() { modifies self; }").unwrap_err();
        assert!(e.message.contains("ensures"));
    }

    #[test]
    fn role_missing_uses() {
        let e = parse_role("R : role specification\n M() { ensures true; }").unwrap_err();
        assert!(e.message.contains("uses"));
    }

    #[test]
    fn role_unknown_clause() {
        let e = parse_role("R : role specification uses T\n M() { assures true; }").unwrap_err();
        assert!(e.message.contains("unknown clause keyword `assures`"));
    }

    #[test]
    fn role_omitted_modifies_is_empty() {
        let r = parse_role("R : role specification uses T\n Int M() { ensures result = 1; }").unwrap();
        assert!(r.methods[0].modifies.is_empty());
        assert_eq!(r.methods[0].ret, Some(Sort::int()));
    }

    #[test]
    fn role_frame_separators() {
        let r = parse_role(
            "R : role specification uses T\n M() { modifies self /\\ containedObjects(zonalClocksOf(self), pre); ensures true; }",
        )
        .unwrap();
        assert_eq!(r.methods[0].modifies.len(), 2);
    }

    #[test]
    fn both_constructs_spellings() {
        let r = parse_role("R : role specification uses T\n R() { contructs self; ensures true; }").unwrap();
        assert_eq!(r.methods[0].constructs, Some(ConstructsKw::Contructs));
        let r = parse_role("R : role specification uses T\n R() { constructs self; ensures true; }").unwrap();
        assert_eq!(r.methods[0].constructs, Some(ConstructsKw::Constructs));
    }

    #[test]
    fn unbound_receiver_rejected() {
        let e = parse_interaction("W : interaction\nclass C { method M() { q.N() } }").unwrap_err();
        assert!(e.message.contains("unbound instance variable `q`"));
    }

    #[test]
    fn action_precedence() {
        let i = parse_interaction("W : interaction\nclass C { method M() { A(); B() /\\ D() [] E() } }").unwrap();
        let body = &i.classes[0].methods[0].body;
        let ActionKind::Seq(_, rhs) = &body.kind else { panic!() };
        let ActionKind::Choice(l, _) = &rhs.kind else { panic!() };
        assert!(matches!(l.kind, ActionKind::Indep(..)));
    }

    #[test]
    fn let_source_stops_at_in() {
        let i = parse_interaction(
            "W : interaction\nclass C { method M() { let i:Int = masterOf(self).GetTime() in SetZonalTime(i) } }",
        )
        .unwrap();
        let ActionKind::Let { source, body, .. } = &i.classes[0].methods[0].body.kind else { panic!() };
        assert!(matches!(source, LetSource::Invoke(_)));
        assert!(matches!(body.kind, ActionKind::Invoke { ref method, .. } if method == "SetZonalTime"));
    }

    #[test]
    fn parse_any_detects_kind() {
        assert_eq!(parse_any("T : trait").unwrap().kind(), UnitKind::Trait);
        assert_eq!(parse_any("R : role specification uses T").unwrap().kind(), UnitKind::Role);
        assert_eq!(parse_any("W : interaction specification").unwrap().kind(), UnitKind::Interaction);
    }
}
