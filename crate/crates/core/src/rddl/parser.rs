//! Recursive descent parser for RDDL domain and instance files.
//!
//! The accepted productions are listed in `docs/rddl-subset.md`. Constructs
//! outside the subset (enumerated types, intermediate fluents, continuous
//! distributions, math functions, constraint blocks) are rejected with a
//! [`ParseError::Unsupported`] naming the construct.

use std::collections::HashSet;

use super::ast::*;
use super::error::ParseError;
use super::lexer::{tokenize, Token, TokenKind};

pub type ParseResult<T> = Result<T, ParseError>;

const UNSUPPORTED_CALLS: &[&str] = &[
    "Normal",
    "Uniform",
    "Exponential",
    "Discrete",
    "Multinomial",
    "Dirichlet",
    "Poisson",
    "Gamma",
    "Weibull",
    "Geometric",
    "Binomial",
    "DiracDelta",
    "exp",
    "ln",
    "log",
    "sqrt",
    "pow",
    "min",
    "max",
    "abs",
    "sgn",
    "round",
    "floor",
    "ceil",
    "cos",
    "sin",
    "tan",
    "acos",
    "asin",
    "atan",
    "cosh",
    "sinh",
    "tanh",
    "switch",
    "max_",
    "min_",
    "argmax_",
    "argmin_",
];

const UNSUPPORTED_SECTIONS: &[&str] = &[
    "state-action-constraints",
    "action-preconditions",
    "state-invariants",
    "observation",
    "termination",
];

/// Parse a domain file.
pub fn parse_domain(text: &str) -> ParseResult<DomainAst> {
    let mut p = Parser::new(text)?;
    let domain = p.domain()?;
    p.expect_eof()?;
    Ok(domain)
}

/// Parse an instance file: any number of `non-fluents` blocks followed by one
/// `instance` block. The block named by the instance's `non-fluents = ..` is
/// merged into the result.
pub fn parse_instance(text: &str) -> ParseResult<InstanceAst> {
    let mut p = Parser::new(text)?;
    p.instance_file()
}

struct NonFluentsBlock {
    name: String,
    domain: String,
    objects: Vec<ObjectDecl>,
    assignments: Vec<Assignment>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> ParseResult<Self> {
        Ok(Self {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: impl Into<String>) -> ParseResult<T> {
        Err(ParseError::Syntax {
            expected: expected.into(),
            found: self.peek().describe(),
            span: self.span(),
        })
    }

    fn unsupported<T>(&self, construct: impl Into<String>, span: Span) -> ParseResult<T> {
        Err(ParseError::Unsupported {
            construct: construct.into(),
            span,
        })
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> ParseResult<Span> {
        if *self.peek() == kind {
            Ok(self.advance().span)
        } else {
            self.error(kind.describe())
        }
    }

    fn expect_eof(&self) -> ParseResult<()> {
        match self.peek() {
            TokenKind::Eof => Ok(()),
            _ => self.error("end of input"),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), TokenKind::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> ParseResult<Span> {
        if self.is_keyword(kw) {
            Ok(self.advance().span)
        } else {
            self.error(format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> ParseResult<(String, Span)> {
        match self.peek().clone() {
            TokenKind::Ident(s) => {
                let span = self.advance().span;
                Ok((s, span))
            }
            _ => self.error("identifier"),
        }
    }

    fn opt_semi(&mut self) {
        self.eat(&TokenKind::Semi);
    }

    // ------------------------------------------------------------------
    // domain

    fn domain(&mut self) -> ParseResult<DomainAst> {
        let span = self.expect_keyword("domain")?;
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LBrace)?;

        let mut requirements = Vec::new();
        let mut types = Vec::new();
        let mut pvariables = Vec::new();
        let mut cpfs = Vec::new();
        let mut reward = None;

        while *self.peek() != TokenKind::RBrace {
            let (section, sspan) = self.ident()?;
            match section.as_str() {
                "requirements" => {
                    self.expect(TokenKind::Assign)?;
                    self.expect(TokenKind::LBrace)?;
                    loop {
                        let (r, _) = self.ident()?;
                        requirements.push(r);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(TokenKind::RBrace)?;
                    self.opt_semi();
                }
                "types" => {
                    self.expect(TokenKind::LBrace)?;
                    while *self.peek() != TokenKind::RBrace {
                        types.push(self.type_decl()?);
                    }
                    self.expect(TokenKind::RBrace)?;
                    self.opt_semi();
                }
                "pvariables" => {
                    self.expect(TokenKind::LBrace)?;
                    while *self.peek() != TokenKind::RBrace {
                        pvariables.push(self.pvar_decl()?);
                    }
                    self.expect(TokenKind::RBrace)?;
                    self.opt_semi();
                }
                "cpfs" | "cdfs" => {
                    self.expect(TokenKind::LBrace)?;
                    while *self.peek() != TokenKind::RBrace {
                        cpfs.push(self.cpf()?);
                    }
                    self.expect(TokenKind::RBrace)?;
                    self.opt_semi();
                }
                "reward" => {
                    self.expect(TokenKind::Assign)?;
                    let e = self.expr()?;
                    if e.contains_distribution() {
                        return self.unsupported("distribution inside the reward expression", sspan);
                    }
                    reward = Some(e);
                    self.expect(TokenKind::Semi)?;
                }
                s if UNSUPPORTED_SECTIONS.contains(&s) => {
                    return self.unsupported(format!("`{s}` block"), sspan);
                }
                _ => {
                    return Err(ParseError::Syntax {
                        expected: "domain section".into(),
                        found: format!("identifier `{section}`"),
                        span: sspan,
                    })
                }
            }
        }
        self.expect(TokenKind::RBrace)?;
        self.opt_semi();

        let Some(reward) = reward else {
            return Err(ParseError::Syntax {
                expected: "`reward` section".into(),
                found: "end of domain".into(),
                span: self.span(),
            });
        };

        Ok(DomainAst {
            name,
            requirements,
            types,
            pvariables,
            cpfs,
            reward,
            span,
        })
    }

    fn type_decl(&mut self) -> ParseResult<TypeDecl> {
        let (name, span) = self.ident()?;
        self.expect(TokenKind::Colon)?;
        match self.peek().clone() {
            TokenKind::Ident(s) if s == "object" => {
                self.advance();
            }
            TokenKind::Ident(s) => {
                return self.unsupported(format!("type hierarchy (`{name} : {s}`)"), span);
            }
            TokenKind::LBrace => return self.unsupported(format!("enumerated type `{name}`"), span),
            _ => return self.error("`object`"),
        }
        self.expect(TokenKind::Semi)?;
        Ok(TypeDecl { name, span })
    }

    fn pvar_decl(&mut self) -> ParseResult<PvarDecl> {
        let (name, span) = self.ident()?;
        let mut params = Vec::new();
        if self.eat(&TokenKind::LParen) {
            loop {
                let (t, _) = self.ident()?;
                params.push(t);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect(TokenKind::Colon)?;
        self.expect(TokenKind::LBrace)?;

        let (kind_name, kspan) = self.ident()?;
        let kind = match kind_name.as_str() {
            "state-fluent" => PvarKind::StateFluent,
            "non-fluent" => PvarKind::NonFluent,
            "action-fluent" => PvarKind::ActionFluent,
            "interm-fluent" | "observ-fluent" | "derived-fluent" => {
                return self.unsupported(format!("{kind_name} `{name}`"), kspan);
            }
            _ => {
                return Err(ParseError::Syntax {
                    expected: "pvariable kind".into(),
                    found: format!("identifier `{kind_name}`"),
                    span: kspan,
                })
            }
        };
        self.expect(TokenKind::Comma)?;
        let (range_name, rspan) = self.ident()?;
        let range = match range_name.as_str() {
            "bool" => ValueRange::Bool,
            "real" => ValueRange::Real,
            "int" => return self.unsupported(format!("int-valued pvariable `{name}`"), rspan),
            other => {
                return self.unsupported(format!("pvariable range `{other}` for `{name}`"), rspan);
            }
        };

        let mut default = match range {
            ValueRange::Bool => Value::Bool(false),
            ValueRange::Real => Value::Real(0.0),
        };
        while self.eat(&TokenKind::Comma) {
            let (attr, aspan) = self.ident()?;
            match attr.as_str() {
                "default" => {
                    self.expect(TokenKind::Assign)?;
                    default = self.value()?;
                }
                "level" => {
                    return self.unsupported(format!("`level` attribute on `{name}`"), aspan);
                }
                _ => {
                    return Err(ParseError::Syntax {
                        expected: "`default`".into(),
                        found: format!("identifier `{attr}`"),
                        span: aspan,
                    })
                }
            }
        }
        self.expect(TokenKind::RBrace)?;
        self.expect(TokenKind::Semi)?;
        Ok(PvarDecl {
            name,
            kind,
            params,
            range,
            default,
            span,
        })
    }

    fn value(&mut self) -> ParseResult<Value> {
        let negative = self.eat(&TokenKind::Minus);
        match self.peek().clone() {
            TokenKind::Number(n) => {
                self.advance();
                Ok(Value::Real(if negative { -n } else { n }))
            }
            TokenKind::Ident(s) if !negative && (s == "true" || s == "false") => {
                self.advance();
                Ok(Value::Bool(s == "true"))
            }
            TokenKind::Object(o) if !negative => {
                let span = self.span();
                self.unsupported(format!("object-valued literal `@{o}`"), span)
            }
            _ => self.error("literal value"),
        }
    }

    fn cpf(&mut self) -> ParseResult<Cpf> {
        let span = self.span();
        let name = match self.peek().clone() {
            TokenKind::Primed(n) => {
                self.advance();
                n
            }
            TokenKind::Ident(n) => {
                return Err(ParseError::Syntax {
                    expected: "primed next-state fluent".into(),
                    found: format!("identifier `{n}`"),
                    span,
                })
            }
            _ => return self.error("primed next-state fluent"),
        };
        let mut params = Vec::new();
        if self.eat(&TokenKind::LParen) {
            loop {
                match self.peek().clone() {
                    TokenKind::Var(v) => {
                        self.advance();
                        params.push(v);
                    }
                    _ => return self.error("parameter variable"),
                }
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect(TokenKind::Assign)?;
        let body = self.expr()?;
        let expr = normalize_cpf(body).map_err(|construct| ParseError::Unsupported { construct, span })?;
        self.expect(TokenKind::Semi)?;
        Ok(Cpf {
            name,
            params,
            expr,
            span,
        })
    }

    // ------------------------------------------------------------------
    // expressions

    fn expr(&mut self) -> ParseResult<Expr> {
        self.equiv()
    }

    fn binary_level(
        &mut self,
        ops: &[(TokenKind, BinaryOp)],
        next: fn(&mut Self) -> ParseResult<Expr>,
    ) -> ParseResult<Expr> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (tok, op) in ops {
                if self.peek() == tok {
                    self.advance();
                    let rhs = next(self)?;
                    lhs = Expr::Binary {
                        op: *op,
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                    };
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn equiv(&mut self) -> ParseResult<Expr> {
        self.binary_level(&[(TokenKind::Equiv, BinaryOp::Equiv)], Self::implies)
    }

    fn implies(&mut self) -> ParseResult<Expr> {
        self.binary_level(&[(TokenKind::Implies, BinaryOp::Implies)], Self::or)
    }

    fn or(&mut self) -> ParseResult<Expr> {
        self.binary_level(&[(TokenKind::Or, BinaryOp::Or)], Self::and)
    }

    fn and(&mut self) -> ParseResult<Expr> {
        self.binary_level(&[(TokenKind::And, BinaryOp::And)], Self::comparison)
    }

    fn comparison(&mut self) -> ParseResult<Expr> {
        self.binary_level(
            &[
                (TokenKind::EqEq, BinaryOp::Eq),
                (TokenKind::Neq, BinaryOp::Neq),
                (TokenKind::Le, BinaryOp::Le),
                (TokenKind::Lt, BinaryOp::Lt),
                (TokenKind::Ge, BinaryOp::Ge),
                (TokenKind::Gt, BinaryOp::Gt),
            ],
            Self::additive,
        )
    }

    fn additive(&mut self) -> ParseResult<Expr> {
        self.binary_level(
            &[(TokenKind::Plus, BinaryOp::Add), (TokenKind::Minus, BinaryOp::Sub)],
            Self::multiplicative,
        )
    }

    fn multiplicative(&mut self) -> ParseResult<Expr> {
        self.binary_level(
            &[(TokenKind::Star, BinaryOp::Mul), (TokenKind::Slash, BinaryOp::Div)],
            Self::unary,
        )
    }

    fn unary(&mut self) -> ParseResult<Expr> {
        match self.peek() {
            TokenKind::Tilde => {
                self.advance();
                Ok(Expr::Unary {
                    op: UnaryOp::Not,
                    arg: Box::new(self.unary()?),
                })
            }
            TokenKind::Minus => {
                self.advance();
                if let TokenKind::Number(n) = *self.peek() {
                    self.advance();
                    return Ok(Expr::Real(-n));
                }
                Ok(Expr::Unary {
                    op: UnaryOp::Neg,
                    arg: Box::new(self.unary()?),
                })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> ParseResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            TokenKind::Number(n) => {
                self.advance();
                Ok(Expr::Real(n))
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::LBracket => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RBracket)?;
                Ok(e)
            }
            TokenKind::Var(v) => {
                self.advance();
                Ok(Expr::Term(Term::Var(v), span))
            }
            TokenKind::Object(o) => {
                self.advance();
                Ok(Expr::Term(Term::Object(o), span))
            }
            TokenKind::Primed(n) => self.unsupported(format!("next-state reference `{n}'` inside an expression"), span),
            TokenKind::Ident(name) => self.ident_expr(name, span),
            _ => self.error("expression"),
        }
    }

    fn ident_expr(&mut self, name: String, span: Span) -> ParseResult<Expr> {
        match name.as_str() {
            "true" | "false" => {
                self.advance();
                Ok(Expr::Bool(name == "true"))
            }
            "if" => {
                self.advance();
                let cond = self.expr()?;
                self.expect_keyword("then")?;
                let then_branch = self.expr()?;
                self.expect_keyword("else")?;
                let else_branch = self.expr()?;
                Ok(Expr::If {
                    cond: Box::new(cond),
                    then_branch: Box::new(then_branch),
                    else_branch: Box::new(else_branch),
                })
            }
            "forall_" | "exists_" | "sum_" | "prod_" if *self.peek_at(1) == TokenKind::LBrace => {
                let op = match name.as_str() {
                    "forall_" => AggregateOp::Forall,
                    "exists_" => AggregateOp::Exists,
                    "sum_" => AggregateOp::Sum,
                    _ => AggregateOp::Prod,
                };
                self.advance();
                self.expect(TokenKind::LBrace)?;
                let mut vars = Vec::new();
                loop {
                    let vspan = self.span();
                    let var = match self.peek().clone() {
                        TokenKind::Var(v) => {
                            self.advance();
                            v
                        }
                        _ => return self.error("quantified variable"),
                    };
                    self.expect(TokenKind::Colon)?;
                    let (ty, _) = self.ident()?;
                    vars.push((var, ty, vspan));
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RBrace)?;
                let mut body = self.unary()?;
                for (var, ty, vspan) in vars.into_iter().rev() {
                    body = Expr::Aggregate {
                        op,
                        var,
                        ty,
                        body: Box::new(body),
                        span: vspan,
                    };
                }
                Ok(body)
            }
            "Bernoulli" | "KronDelta" => {
                self.advance();
                let close = match self.peek() {
                    TokenKind::LParen => TokenKind::RParen,
                    TokenKind::LBracket => TokenKind::RBracket,
                    _ => return self.error("`(`"),
                };
                self.advance();
                let arg = Box::new(self.expr()?);
                self.expect(close)?;
                Ok(if name == "Bernoulli" {
                    Expr::Bernoulli(arg)
                } else {
                    Expr::KronDelta(arg)
                })
            }
            n if UNSUPPORTED_CALLS.contains(&n) => self.unsupported(format!("`{n}`"), span),
            _ => {
                self.advance();
                let mut args = Vec::new();
                if self.eat(&TokenKind::LParen) {
                    loop {
                        args.push(self.term()?);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(TokenKind::RParen)?;
                }
                Ok(Expr::Apply { name, args, span })
            }
        }
    }

    fn term(&mut self) -> ParseResult<Term> {
        match self.peek().clone() {
            TokenKind::Var(v) => {
                self.advance();
                Ok(Term::Var(v))
            }
            TokenKind::Object(o) | TokenKind::Ident(o) => {
                self.advance();
                Ok(Term::Object(o))
            }
            _ => self.error("argument term"),
        }
    }

    // ------------------------------------------------------------------
    // instance

    fn instance_file(&mut self) -> ParseResult<InstanceAst> {
        let mut blocks: Vec<NonFluentsBlock> = Vec::new();
        loop {
            if self.is_keyword("non-fluents") {
                blocks.push(self.non_fluents_block()?);
            } else if self.is_keyword("instance") {
                break;
            } else {
                return self.error("`non-fluents` or `instance` block");
            }
        }

        let span = self.expect_keyword("instance")?;
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LBrace)?;

        let mut domain = None;
        let mut non_fluents_name: Option<(String, Span)> = None;
        let mut objects = Vec::new();
        let mut init_state = Vec::new();
        let mut max_nondef_actions = None;
        let mut horizon = None;
        let mut discount = None;

        while *self.peek() != TokenKind::RBrace {
            let (field, fspan) = self.ident()?;
            match field.as_str() {
                "domain" => {
                    self.expect(TokenKind::Assign)?;
                    domain = Some(self.ident()?.0);
                    self.expect(TokenKind::Semi)?;
                }
                "non-fluents" => {
                    self.expect(TokenKind::Assign)?;
                    non_fluents_name = Some(self.ident()?);
                    self.expect(TokenKind::Semi)?;
                }
                "objects" => {
                    objects.extend(self.objects_block()?);
                }
                "init-state" => {
                    init_state = self.assignment_block()?;
                }
                "max-nondef-actions" => {
                    self.expect(TokenKind::Assign)?;
                    max_nondef_actions = Some(match self.peek().clone() {
                        TokenKind::Number(n) if n >= 1.0 && n.fract() == 0.0 => {
                            self.advance();
                            NonDefActions::Count(n as u32)
                        }
                        TokenKind::Ident(s) if s == "pos-inf" => {
                            self.advance();
                            NonDefActions::Unbounded
                        }
                        _ => return self.error("positive integer or `pos-inf`"),
                    });
                    self.expect(TokenKind::Semi)?;
                }
                "horizon" => {
                    self.expect(TokenKind::Assign)?;
                    horizon = Some(match *self.peek() {
                        TokenKind::Number(n) if n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64 => {
                            self.advance();
                            n as u32
                        }
                        TokenKind::Ident(ref s) if s == "terminate-when" => {
                            return self.unsupported("`terminate-when` horizon", fspan);
                        }
                        _ => return self.error("positive integer horizon"),
                    });
                    self.expect(TokenKind::Semi)?;
                }
                "discount" => {
                    self.expect(TokenKind::Assign)?;
                    discount = Some(match *self.peek() {
                        TokenKind::Number(n) if n > 0.0 && n <= 1.0 => {
                            self.advance();
                            n
                        }
                        _ => return self.error("discount in (0, 1]"),
                    });
                    self.expect(TokenKind::Semi)?;
                }
                _ => {
                    return Err(ParseError::Syntax {
                        expected: "instance field".into(),
                        found: format!("identifier `{field}`"),
                        span: fspan,
                    })
                }
            }
        }
        let close = self.span();
        self.expect(TokenKind::RBrace)?;
        self.opt_semi();
        self.expect_eof()?;

        let missing = |what: &str| ParseError::Syntax {
            expected: format!("`{what}` in instance `{name}`"),
            found: "end of instance block".into(),
            span: close,
        };
        let domain = domain.ok_or_else(|| missing("domain"))?;
        let horizon = horizon.ok_or_else(|| missing("horizon"))?;
        let discount = discount.unwrap_or(1.0);

        let mut non_fluents = Vec::new();
        let mut all_objects = Vec::new();
        let nf_name = match non_fluents_name {
            Some((nf, nspan)) => {
                let Some(idx) = blocks.iter().position(|b| b.name == nf) else {
                    return Err(ParseError::Syntax {
                        expected: format!("a `non-fluents {nf}` block in this file"),
                        found: "no such block".into(),
                        span: nspan,
                    });
                };
                let block = blocks.swap_remove(idx);
                if block.domain != domain {
                    return Err(ParseError::Syntax {
                        expected: format!("non-fluents for domain `{domain}`"),
                        found: format!("domain `{}`", block.domain),
                        span: nspan,
                    });
                }
                all_objects.extend(block.objects);
                non_fluents = block.assignments;
                Some(nf)
            }
            None => None,
        };
        all_objects.extend(objects);
        check_duplicates(&init_state)?;

        Ok(InstanceAst {
            name,
            domain,
            non_fluents_name: nf_name,
            objects: all_objects,
            non_fluents,
            init_state,
            max_nondef_actions,
            horizon,
            discount,
            span,
        })
    }

    fn non_fluents_block(&mut self) -> ParseResult<NonFluentsBlock> {
        self.expect_keyword("non-fluents")?;
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut domain = None;
        let mut objects = Vec::new();
        let mut assignments = Vec::new();
        while *self.peek() != TokenKind::RBrace {
            let (field, fspan) = self.ident()?;
            match field.as_str() {
                "domain" => {
                    self.expect(TokenKind::Assign)?;
                    domain = Some(self.ident()?.0);
                    self.expect(TokenKind::Semi)?;
                }
                "objects" => objects.extend(self.objects_block()?),
                "non-fluents" => assignments.extend(self.assignment_block()?),
                _ => {
                    return Err(ParseError::Syntax {
                        expected: "non-fluents field".into(),
                        found: format!("identifier `{field}`"),
                        span: fspan,
                    })
                }
            }
        }
        let close = self.span();
        self.expect(TokenKind::RBrace)?;
        self.opt_semi();
        check_duplicates(&assignments)?;
        let domain = domain.ok_or_else(|| ParseError::Syntax {
            expected: format!("`domain` in non-fluents `{name}`"),
            found: "end of block".into(),
            span: close,
        })?;
        Ok(NonFluentsBlock {
            name,
            domain,
            objects,
            assignments,
        })
    }

    fn objects_block(&mut self) -> ParseResult<Vec<ObjectDecl>> {
        self.expect(TokenKind::LBrace)?;
        let mut decls = Vec::new();
        while *self.peek() != TokenKind::RBrace {
            let (class, span) = self.ident()?;
            self.expect(TokenKind::Colon)?;
            self.expect(TokenKind::LBrace)?;
            let mut objects = Vec::new();
            if *self.peek() != TokenKind::RBrace {
                loop {
                    match self.peek().clone() {
                        TokenKind::Ident(o) | TokenKind::Object(o) => {
                            self.advance();
                            objects.push(o);
                        }
                        _ => return self.error("object name"),
                    }
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RBrace)?;
            self.expect(TokenKind::Semi)?;
            decls.push(ObjectDecl { class, objects, span });
        }
        self.expect(TokenKind::RBrace)?;
        self.opt_semi();
        Ok(decls)
    }

    fn assignment_block(&mut self) -> ParseResult<Vec<Assignment>> {
        self.expect(TokenKind::LBrace)?;
        let mut out = Vec::new();
        while *self.peek() != TokenKind::RBrace {
            let span = self.span();
            let negated = self.eat(&TokenKind::Tilde);
            let (name, _) = self.ident()?;
            let mut args = Vec::new();
            if self.eat(&TokenKind::LParen) {
                loop {
                    match self.peek().clone() {
                        TokenKind::Ident(o) | TokenKind::Object(o) => {
                            self.advance();
                            args.push(o);
                        }
                        _ => return self.error("object name"),
                    }
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RParen)?;
            }
            let value = if negated {
                Value::Bool(false)
            } else if self.eat(&TokenKind::Assign) {
                self.value()?
            } else {
                Value::Bool(true)
            };
            self.expect(TokenKind::Semi)?;
            out.push(Assignment {
                name,
                args,
                value,
                span,
            });
        }
        self.expect(TokenKind::RBrace)?;
        self.opt_semi();
        Ok(out)
    }
}

fn check_duplicates(assignments: &[Assignment]) -> ParseResult<()> {
    let mut seen = HashSet::new();
    for a in assignments {
        if !seen.insert((a.name.as_str(), a.args.as_slice())) {
            return Err(ParseError::DuplicateAssignment {
                symbol: a.name.clone(),
                args: a.args.clone(),
                span: a.span,
            });
        }
    }
    Ok(())
}

/// Bring a CPF body into root-distribution form.
///
/// Deterministic bodies become `KronDelta(e)`. Distributions may appear as
/// leaves of an if-then-else tree; those are lifted into a single root:
/// `if c then KronDelta(a) else Bernoulli(p)` becomes
/// `Bernoulli(if c then a else p)`. Distributions anywhere else are rejected.
fn normalize_cpf(body: Expr) -> Result<Expr, String> {
    if !body.contains_distribution() {
        return Ok(Expr::KronDelta(Box::new(body)));
    }
    lift(body)
}

fn lift(e: Expr) -> Result<Expr, String> {
    match e {
        Expr::Bernoulli(p) | Expr::KronDelta(p) if p.contains_distribution() => {
            Err("nested distribution".to_string())
        }
        Expr::Bernoulli(_) | Expr::KronDelta(_) => Ok(e),
        Expr::If {
            cond,
            then_branch,
            else_branch,
        } if !cond.contains_distribution() => {
            let t = lift_branch(*then_branch)?;
            let f = lift_branch(*else_branch)?;
            Ok(match (t, f) {
                (Expr::KronDelta(a), Expr::KronDelta(b)) => Expr::KronDelta(Box::new(Expr::If {
                    cond,
                    then_branch: a,
                    else_branch: b,
                })),
                (t, f) => Expr::Bernoulli(Box::new(Expr::If {
                    cond,
                    then_branch: Box::new(parameter(t)),
                    else_branch: Box::new(parameter(f)),
                })),
            })
        }
        _ => Err("distribution below the CPF root".to_string()),
    }
}

fn lift_branch(e: Expr) -> Result<Expr, String> {
    if e.contains_distribution() {
        lift(e)
    } else {
        Ok(Expr::KronDelta(Box::new(e)))
    }
}

fn parameter(root: Expr) -> Expr {
    match root {
        Expr::Bernoulli(p) | Expr::KronDelta(p) => *p,
        other => other,
    }
}
