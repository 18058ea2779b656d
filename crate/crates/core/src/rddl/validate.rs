//! Cross-validation of a domain against an instance.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::error::ValidationError;

type VResult<T> = Result<T, ValidationError>;

/// A domain/instance pair whose symbols, arities and types all resolve.
#[derive(Debug, Clone)]
pub struct TypedModel {
    pub domain: DomainAst,
    pub instance: InstanceAst,
    object_class: HashMap<String, String>,
}

impl TypedModel {
    /// Class of a declared object.
    pub fn class_of(&self, object: &str) -> Option<&str> {
        self.object_class.get(object).map(String::as_str)
    }

    /// Objects of `class` in instance declaration order.
    pub fn objects_of(&self, class: &str) -> Vec<&str> {
        self.instance.objects_of(class)
    }
}

struct Ctx<'a> {
    domain: &'a DomainAst,
    types: HashSet<&'a str>,
    pvars: HashMap<&'a str, &'a PvarDecl>,
    object_class: HashMap<String, String>,
}

/// Check `instance` against `domain`.
///
/// Validation reads declarations through lookup tables, so the result does
/// not depend on the order of declarations within a block.
pub fn validate(domain: &DomainAst, instance: &InstanceAst) -> VResult<TypedModel> {
    if domain.name != instance.domain {
        return Err(ValidationError::DomainMismatch {
            expected: instance.domain.clone(),
            found: domain.name.clone(),
            span: instance.span,
        });
    }

    let mut types = HashSet::new();
    for t in &domain.types {
        if !types.insert(t.name.as_str()) {
            return Err(ValidationError::InvalidDeclaration {
                symbol: t.name.clone(),
                detail: "type declared twice".into(),
                span: t.span,
            });
        }
    }

    let mut pvars: HashMap<&str, &PvarDecl> = HashMap::new();
    for p in &domain.pvariables {
        if pvars.insert(p.name.as_str(), p).is_some() {
            return Err(ValidationError::InvalidDeclaration {
                symbol: p.name.clone(),
                detail: "pvariable declared twice".into(),
                span: p.span,
            });
        }
        for ty in &p.params {
            if !types.contains(ty.as_str()) {
                return Err(ValidationError::UnknownSymbol {
                    symbol: ty.clone(),
                    span: p.span,
                });
            }
        }
        if p.kind != PvarKind::NonFluent && p.range != ValueRange::Bool {
            return Err(ValidationError::TypeMismatch {
                symbol: p.name.clone(),
                detail: format!("{} must be bool-ranged", p.kind.keyword()),
                span: p.span,
            });
        }
        if !p.default.fits(p.range) {
            return Err(ValidationError::TypeMismatch {
                symbol: p.name.clone(),
                detail: format!("default {:?} does not fit range {}", p.default, p.range.keyword()),
                span: p.span,
            });
        }
    }

    let mut object_class = HashMap::new();
    for decl in &instance.objects {
        if !types.contains(decl.class.as_str()) {
            return Err(ValidationError::UnknownSymbol {
                symbol: decl.class.clone(),
                span: decl.span,
            });
        }
        for o in &decl.objects {
            if object_class.insert(o.clone(), decl.class.clone()).is_some() {
                return Err(ValidationError::InvalidDeclaration {
                    symbol: o.clone(),
                    detail: "object declared twice".into(),
                    span: decl.span,
                });
            }
        }
    }

    let ctx = Ctx {
        domain,
        types,
        pvars,
        object_class,
    };
    ctx.check_cpfs()?;
    ctx.check_expr(&domain.reward, &mut Vec::new())?;
    ctx.check_assignments(&instance.non_fluents, PvarKind::NonFluent)?;
    ctx.check_assignments(&instance.init_state, PvarKind::StateFluent)?;

    Ok(TypedModel {
        domain: domain.clone(),
        instance: instance.clone(),
        object_class: ctx.object_class,
    })
}

impl<'a> Ctx<'a> {
    fn check_cpfs(&self) -> VResult<()> {
        let mut seen = HashSet::new();
        for cpf in &self.domain.cpfs {
            let Some(decl) = self.pvars.get(cpf.name.as_str()) else {
                return Err(ValidationError::UnknownSymbol {
                    symbol: cpf.name.clone(),
                    span: cpf.span,
                });
            };
            if decl.kind != PvarKind::StateFluent {
                return Err(ValidationError::TypeMismatch {
                    symbol: cpf.name.clone(),
                    detail: format!("CPF target must be a state-fluent, found {}", decl.kind.keyword()),
                    span: cpf.span,
                });
            }
            if decl.params.len() != cpf.params.len() {
                return Err(ValidationError::ArityMismatch {
                    symbol: cpf.name.clone(),
                    expected: decl.params.len(),
                    found: cpf.params.len(),
                    span: cpf.span,
                });
            }
            if !seen.insert(cpf.name.as_str()) {
                return Err(ValidationError::InvalidDeclaration {
                    symbol: cpf.name.clone(),
                    detail: "CPF defined twice".into(),
                    span: cpf.span,
                });
            }
            let mut scope: Vec<(&str, &str)> = Vec::new();
            for (v, ty) in cpf.params.iter().zip(&decl.params) {
                if scope.iter().any(|(s, _)| *s == v) {
                    return Err(ValidationError::InvalidDeclaration {
                        symbol: v.clone(),
                        detail: "parameter variable repeated".into(),
                        span: cpf.span,
                    });
                }
                scope.push((v.as_str(), ty.as_str()));
            }
            self.check_expr(&cpf.expr, &mut scope)?;
        }
        for decl in self.domain.pvariables_of(PvarKind::StateFluent) {
            if !seen.contains(decl.name.as_str()) {
                return Err(ValidationError::InvalidDeclaration {
                    symbol: decl.name.clone(),
                    detail: "state-fluent has no CPF".into(),
                    span: decl.span,
                });
            }
        }
        Ok(())
    }

    fn term_type(&self, term: &Term, scope: &[(&'a str, &'a str)], span: Span) -> VResult<String> {
        match term {
            Term::Var(v) => scope
                .iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|(_, ty)| ty.to_string())
                .ok_or_else(|| ValidationError::UnknownSymbol {
                    symbol: v.clone(),
                    span,
                }),
            Term::Object(o) => self
                .object_class
                .get(o)
                .cloned()
                .ok_or_else(|| ValidationError::UnknownSymbol {
                    symbol: o.clone(),
                    span,
                }),
        }
    }

    fn check_expr(&self, e: &'a Expr, scope: &mut Vec<(&'a str, &'a str)>) -> VResult<()> {
        match e {
            Expr::Bool(_) | Expr::Real(_) => Ok(()),
            Expr::Term(t, span) => Err(ValidationError::TypeMismatch {
                symbol: t.to_string(),
                detail: "object term used as a value outside `==`/`~=`".into(),
                span: *span,
            }),
            Expr::Apply { name, args, span } => {
                let Some(decl) = self.pvars.get(name.as_str()) else {
                    return Err(ValidationError::UnknownSymbol {
                        symbol: name.clone(),
                        span: *span,
                    });
                };
                if decl.params.len() != args.len() {
                    return Err(ValidationError::ArityMismatch {
                        symbol: name.clone(),
                        expected: decl.params.len(),
                        found: args.len(),
                        span: *span,
                    });
                }
                for (i, (arg, ty)) in args.iter().zip(&decl.params).enumerate() {
                    let found = self.term_type(arg, scope, *span)?;
                    if &found != ty {
                        return Err(ValidationError::TypeMismatch {
                            symbol: name.clone(),
                            detail: format!("argument {} is `{found}`, expected `{ty}`", i + 1),
                            span: *span,
                        });
                    }
                }
                Ok(())
            }
            Expr::Unary { arg, .. } => self.check_expr(arg, scope),
            Expr::Binary { op, lhs, rhs } => {
                if let (Expr::Term(a, span), Expr::Term(b, _)) = (lhs.as_ref(), rhs.as_ref()) {
                    if !matches!(op, BinaryOp::Eq | BinaryOp::Neq) {
                        return Err(ValidationError::TypeMismatch {
                            symbol: a.to_string(),
                            detail: format!("objects only support `==`/`~=`, found `{}`", op.symbol()),
                            span: *span,
                        });
                    }
                    let ta = self.term_type(a, scope, *span)?;
                    let tb = self.term_type(b, scope, *span)?;
                    if ta != tb {
                        return Err(ValidationError::TypeMismatch {
                            symbol: a.to_string(),
                            detail: format!("comparing `{ta}` with `{tb}`"),
                            span: *span,
                        });
                    }
                    return Ok(());
                }
                self.check_expr(lhs, scope)?;
                self.check_expr(rhs, scope)
            }
            Expr::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.check_expr(cond, scope)?;
                self.check_expr(then_branch, scope)?;
                self.check_expr(else_branch, scope)
            }
            Expr::Aggregate {
                var, ty, body, span, ..
            } => {
                if !self.types.contains(ty.as_str()) {
                    return Err(ValidationError::UnknownSymbol {
                        symbol: ty.clone(),
                        span: *span,
                    });
                }
                if scope.iter().any(|(s, _)| s == var) {
                    return Err(ValidationError::InvalidDeclaration {
                        symbol: var.clone(),
                        detail: "quantified variable shadows an enclosing variable".into(),
                        span: *span,
                    });
                }
                scope.push((var.as_str(), ty.as_str()));
                let r = self.check_expr(body, scope);
                scope.pop();
                r
            }
            Expr::Bernoulli(p) | Expr::KronDelta(p) => self.check_expr(p, scope),
        }
    }

    fn check_assignments(&self, items: &[Assignment], kind: PvarKind) -> VResult<()> {
        for a in items {
            let Some(decl) = self.pvars.get(a.name.as_str()) else {
                return Err(ValidationError::UnknownSymbol {
                    symbol: a.name.clone(),
                    span: a.span,
                });
            };
            if decl.kind != kind {
                return Err(ValidationError::TypeMismatch {
                    symbol: a.name.clone(),
                    detail: format!("expected a {}, found a {}", kind.keyword(), decl.kind.keyword()),
                    span: a.span,
                });
            }
            if decl.params.len() != a.args.len() {
                return Err(ValidationError::ArityMismatch {
                    symbol: a.name.clone(),
                    expected: decl.params.len(),
                    found: a.args.len(),
                    span: a.span,
                });
            }
            for (obj, ty) in a.args.iter().zip(&decl.params) {
                let Some(class) = self.object_class.get(obj) else {
                    return Err(ValidationError::UnknownSymbol {
                        symbol: obj.clone(),
                        span: a.span,
                    });
                };
                if class != ty {
                    return Err(ValidationError::TypeMismatch {
                        symbol: a.name.clone(),
                        detail: format!("object `{obj}` is `{class}`, expected `{ty}`"),
                        span: a.span,
                    });
                }
            }
            if !a.value.fits(decl.range) {
                return Err(ValidationError::TypeMismatch {
                    symbol: a.name.clone(),
                    detail: format!("value {:?} does not fit range {}", a.value, decl.range.keyword()),
                    span: a.span,
                });
            }
        }
        Ok(())
    }
}
