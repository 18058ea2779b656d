use super::optim::Params;
use super::tape::{Tape, Var};

/// Largest mismatch between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `|analytic - numeric| / max(1, |analytic|, |numeric|)`, maximized over
    /// every scalar parameter.
    pub max_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compare reverse-mode gradients of `f` against central differences with
/// step `h`. `f` records a scalar loss given one tape variable per parameter.
pub fn gradient_check(params: &Params<f64>, h: f64, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> GradCheck {
    let eval = |p: &Params<f64>| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.tensors.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect();
        let loss = f(&mut tape, &vars);
        (tape, loss)
    };
    let (tape, loss) = eval(params);
    let analytic = tape.backward(loss, &params.shapes());
    let mut report = GradCheck {
        max_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut p = params.clone();
    for (i, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let x = p.tensors[i].data[j];
            p.tensors[i].data[j] = x + h;
            let (t, l) = eval(&p);
            let up = t.value(l).item();
            p.tensors[i].data[j] = x - h;
            let (t, l) = eval(&p);
            let down = t.value(l).item();
            p.tensors[i].data[j] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = g.data[j];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if err > report.max_error || report.worst.is_none() {
                report.max_error = err;
                report.worst = Some((params.names[i].clone(), j));
            }
        }
    }
    report
}
