use proptest::prelude::*;

use super::*;
use crate::corpus;

fn mdp(domain: &str, instance: &str) -> GroundMdp {
    ground(&corpus::load(domain, instance).unwrap()).unwrap()
}

fn tuple(xs: &[&str]) -> Tuple {
    xs.iter().map(|s| s.to_string()).collect()
}

fn names(idx: &[usize], m: &GroundMdp) -> Vec<String> {
    idx.iter().map(|&i| m.state_vars[i].to_string()).collect()
}

#[test]
fn mini_wildfire_counts_and_registries() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    assert_eq!(m.num_state_vars(), 4);
    assert_eq!(m.num_actions(), 6);
    assert!(m.actions[0].is_noop());
    assert_eq!(m.o_f, vec![tuple(&["x1", "y1"]), tuple(&["x2", "y1"])]);
    assert_eq!(m.o_a, vec![tuple(&[]), tuple(&["x1", "y1"]), tuple(&["x2", "y1"])]);
    for t in [
        tuple(&["x1", "y1"]),
        tuple(&["x2", "y1"]),
        tuple(&["x1", "y1", "x2", "y1"]),
        tuple(&["x2", "y1", "x1", "y1"]),
    ] {
        assert!(m.o_nf.contains(&t), "{t:?}");
    }
}

#[test]
fn canonical_ordering() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    assert_eq!(
        m.state_var_names(),
        ["burning(x1,y1)", "burning(x2,y1)", "out-of-fuel(x1,y1)", "out-of-fuel(x2,y1)"]
    );
    assert_eq!(
        m.action_names(),
        ["noop", "cut-out(x1,y1)", "cut-out(x2,y1)", "finisher", "put-out(x1,y1)", "put-out(x2,y1)"]
    );
    for (i, v) in m.state_vars.iter().enumerate() {
        assert_eq!(v.index, i);
    }
    assert_eq!(m.init_state, [false, true, false, false]);
}

#[test]
fn grounding_is_deterministic() {
    let a = mdp(corpus::WILDFIRE, corpus::WILDFIRE_3X3);
    let b = mdp(corpus::WILDFIRE, corpus::WILDFIRE_3X3);
    assert_eq!(a.state_vars, b.state_vars);
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.cpfs, b.cpfs);
    assert_eq!(a.reward, b.reward);
}

#[test]
fn table_rows_for_replicated_instances() {
    // (objects of the fluent tuples, state vars, action vars incl. NOOP)
    let m = mdp(corpus::WILDFIRE, corpus::WILDFIRE_3X3);
    assert_eq!((m.o_f.len(), m.num_state_vars(), m.num_actions()), (9, 18, 19));
    let m = mdp(corpus::SYSADMIN_RING, corpus::SYSADMIN_RING_10);
    assert_eq!((m.o_f.len(), m.num_state_vars(), m.num_actions()), (10, 10, 11));
}

#[test]
fn action_count_formula() {
    for (d, i) in corpus::PAIRS {
        let model = corpus::load(d, i).unwrap();
        let m = ground(&model).unwrap();
        let expected: usize = 1 + model
            .domain
            .pvariables_of(crate::rddl::PvarKind::ActionFluent)
            .map(|p| p.params.iter().map(|t| model.objects_of(t).len()).product::<usize>())
            .sum::<usize>();
        assert_eq!(m.num_actions(), expected);
    }
}

#[test]
fn burning_depends_on_neighbour() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let dbn = extract_dbn(&m);
    let b2 = m.state_var("burning", &["x2", "y1"]).unwrap();
    let b1 = m.state_var("burning", &["x1", "y1"]).unwrap();
    assert!(dbn.state_deps[b2].contains(&b1));
}

#[test]
fn identity_cpf_dependencies() {
    let d = crate::rddl::parse_domain(
        "domain id { pvariables { p : { state-fluent, bool, default = false }; };
         cpfs { p' = KronDelta(p); }; reward = 0; }",
    )
    .unwrap();
    let i = crate::rddl::parse_instance("instance i { domain = id; init-state { p; }; horizon = 3; }").unwrap();
    let m = ground(&crate::rddl::validate(&d, &i).unwrap()).unwrap();
    let dbn = extract_dbn(&m);
    assert_eq!(dbn.state_deps, vec![vec![0]]);
    assert_eq!(dbn.action_deps, vec![Vec::<usize>::new()]);
    assert_eq!(m.num_actions(), 1);
}

/// Dependencies by perturbation over the full state and action space.
fn semantic_deps(m: &GroundMdp, v: usize) -> (Vec<usize>, Vec<usize>) {
    let n = m.num_state_vars();
    let mut sdeps = vec![false; n];
    let mut adeps = vec![false; m.num_actions()];
    for bits in 0u32..(1 << n) {
        let s: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        for a in 0..m.num_actions() {
            let p = m.cpfs[v].prob_true(&s, a).unwrap();
            for u in 0..n {
                let mut t = s.clone();
                t[u] = !t[u];
                if m.cpfs[v].prob_true(&t, a).unwrap() != p {
                    sdeps[u] = true;
                }
            }
            if m.cpfs[v].prob_true(&s, 0).unwrap() != p {
                adeps[a] = true;
            }
        }
    }
    let pick = |xs: Vec<bool>| xs.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    (pick(sdeps), pick(adeps))
}

#[test]
fn sysadmin_dependencies_match_independent_walk() {
    let model = corpus::load(corpus::SYSADMIN_RING, corpus::SYSADMIN_RING_3).unwrap();
    let m = ground(&model).unwrap();
    let dbn = extract_dbn(&m);
    for c in ["c1", "c2", "c3"] {
        let v = m.state_var("running", &[c]).unwrap();
        // read neighbours straight off the instance assignments
        let mut expected: Vec<usize> = model
            .instance
            .non_fluents
            .iter()
            .filter(|a| a.name == "CONNECTED" && a.args[1] == c && a.value.as_f64() != 0.0)
            .map(|a| m.state_var("running", &[&a.args[0]]).unwrap())
            .collect();
        expected.push(v);
        expected.sort();
        assert_eq!(dbn.state_deps[v], expected, "{c}");
        assert_eq!(dbn.action_deps[v], vec![m.action("reboot", &[c]).unwrap()]);
        assert_eq!(semantic_deps(&m, v), (dbn.state_deps[v].clone(), dbn.action_deps[v].clone()));
    }
}

#[test]
fn affected_sets() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let dbn = extract_dbn(&m);
    let fin = m.action("finisher", &[]).unwrap();
    assert_eq!(names(dbn.affected_set(fin).unwrap(), &m), ["burning(x1,y1)", "burning(x2,y1)"]);
    assert!(dbn.affected_set(0).unwrap().is_empty());
    let po = m.action("put-out", &["x1", "y1"]).unwrap();
    assert_eq!(names(dbn.affected_set(po).unwrap(), &m), ["burning(x1,y1)"]);
    let co = m.action("cut-out", &["x2", "y1"]).unwrap();
    assert_eq!(names(dbn.affected_set(co).unwrap(), &m), ["out-of-fuel(x2,y1)"]);
    assert!(matches!(dbn.affected_set(99), Err(GroundError::UnknownAction(99))));
}

#[test]
fn effect_dependencies_drop_overridden_inputs() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let dbn = extract_dbn(&m);
    let b1 = m.state_var("burning", &["x1", "y1"]).unwrap();
    let po = m.action("put-out", &["x1", "y1"]).unwrap();
    assert_eq!(dbn.effect_deps_of(b1, po), Some(&[][..]));
    assert_eq!(dbn.effect_deps_of(b1, m.action("put-out", &["x2", "y1"]).unwrap()), None);
}

#[test]
fn cut_out_evaluates_to_true() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let v = m.state_var("out-of-fuel", &["x1", "y1"]).unwrap();
    let a = m.action("cut-out", &["x1", "y1"]).unwrap();
    assert_eq!(m.cpfs[v].eval(&[false; 4], a).unwrap(), 1.0);
}

#[test]
fn reward_with_both_cells_burning() {
    let m = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let mut s = vec![false; 4];
    s[m.state_var("burning", &["x1", "y1"]).unwrap()] = true;
    s[m.state_var("burning", &["x2", "y1"]).unwrap()] = true;
    assert_eq!(m.reward(&s, 0).unwrap(), -15.0);
    let fin = m.action("finisher", &[]).unwrap();
    assert_eq!(m.reward(&s, fin).unwrap(), -18.0);
}

#[test]
fn undefined_cpf_is_reported() {
    let d = crate::rddl::parse_domain(
        "domain z { pvariables { K : { non-fluent, real, default = 0.0 };
                                p : { state-fluent, bool, default = false }; };
         cpfs { p' = Bernoulli(1 / K); }; reward = 0; }",
    )
    .unwrap();
    let i = crate::rddl::parse_instance("instance i { domain = z; init-state { }; horizon = 3; }").unwrap();
    let err = ground(&crate::rddl::validate(&d, &i).unwrap()).unwrap_err();
    assert!(matches!(err, GroundError::UndefinedCpf { source: EvalError::DivisionByZero, .. }));
}

#[test]
fn empty_quantifier_expansion() {
    let d = crate::rddl::parse_domain(
        "domain e { types { t : object; }; pvariables {
             q(t) : { state-fluent, bool, default = false };
             p : { state-fluent, bool, default = false }; };
         cpfs { q'(?x) = KronDelta(q(?x));
                p' = KronDelta((forall_{?x : t} [q(?x)]) ^ ~(exists_{?x : t} [q(?x)])); };
         reward = (sum_{?x : t} [q(?x)]) + (prod_{?x : t} [q(?x)]); }",
    )
    .unwrap();
    let i = crate::rddl::parse_instance("instance i { domain = e; init-state { }; horizon = 3; }").unwrap();
    let m = ground(&crate::rddl::validate(&d, &i).unwrap()).unwrap();
    assert_eq!(m.cpfs, vec![GroundExpr::KronDelta(Box::new(GroundExpr::Const(1.0)))]);
    assert_eq!(m.reward, GroundExpr::Const(1.0));
}

#[test]
fn encodings_converge_to_same_dbn() {
    let a = mdp(corpus::MINI_WILDFIRE, corpus::MINI_WILDFIRE_2X1);
    let b = mdp(corpus::MINI_WILDFIRE_XY, corpus::MINI_WILDFIRE_XY_2X1);
    assert_eq!(extract_dbn(&a), extract_dbn(&b));
}

fn small_pairs() -> Vec<GroundMdp> {
    corpus::PAIRS.iter().map(|(d, i)| mdp(d, i)).collect()
}

proptest! {
    #[test]
    fn masking_outside_dependency_set(
        pair in 0..corpus::PAIRS.len(),
        seed in prop::collection::vec(any::<bool>(), 72),
        flips in prop::collection::vec(any::<bool>(), 72),
        a in any::<prop::sample::Index>(),
    ) {
        let m = &small_pairs()[pair];
        let n = m.num_state_vars();
        let dbn = extract_dbn(m);
        let a = a.index(m.num_actions());
        let s = &seed[..n];
        for v in 0..n {
            let mut t = s.to_vec();
            for u in 0..n {
                if flips[u] && dbn.state_deps[v].binary_search(&u).is_err() {
                    t[u] = !t[u];
                }
            }
            let p = m.cpfs[v].prob_true(s, a).unwrap();
            prop_assert_eq!(m.cpfs[v].prob_true(&t, a).unwrap(), p);
            // actions outside the set behave like NOOP
            if dbn.action_deps[v].binary_search(&a).is_err() {
                prop_assert_eq!(m.cpfs[v].prob_true(s, 0).unwrap(), p);
            }
        }
    }
}
