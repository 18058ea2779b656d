//! Dependency structure of the ground transition model.

use serde::Serialize;

use super::{GroundError, GroundMdp};

/// Per next-state variable dependencies, all index lists sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dbn {
    /// Current-state variables referenced by each ground CPF.
    pub state_deps: Vec<Vec<usize>>,
    /// Ground actions referenced by each ground CPF.
    pub action_deps: Vec<Vec<usize>>,
    /// For each CPF and each action in its `action_deps`: the state
    /// dependencies that remain once the CPF is specialized to that action
    /// being executed.
    pub effect_deps: Vec<Vec<(usize, Vec<usize>)>>,
    /// Next-state variables whose CPF mentions each ground action.
    affected: Vec<Vec<usize>>,
}

impl Dbn {
    /// Next-state variables whose CPF mentions action `a`. Empty for NOOP.
    pub fn affected_set(&self, a: usize) -> Result<&[usize], GroundError> {
        self.affected
            .get(a)
            .map(Vec::as_slice)
            .ok_or(GroundError::UnknownAction(a))
    }

    /// State dependencies of `var` once action `a` is fixed, if `a` appears
    /// in its CPF.
    pub fn effect_deps_of(&self, var: usize, a: usize) -> Option<&[usize]> {
        self.effect_deps[var]
            .iter()
            .find(|(x, _)| *x == a)
            .map(|(_, d)| d.as_slice())
    }
}

/// Read the dependency sets off the folded ground CPFs.
pub fn extract_dbn(mdp: &GroundMdp) -> Dbn {
    let mut state_deps = Vec::with_capacity(mdp.cpfs.len());
    let mut action_deps = Vec::with_capacity(mdp.cpfs.len());
    let mut effect_deps = Vec::with_capacity(mdp.cpfs.len());
    let mut affected = vec![Vec::new(); mdp.actions.len()];
    for (v, cpf) in mdp.cpfs.iter().enumerate() {
        let sdeps: Vec<usize> = cpf.state_refs().into_iter().collect();
        let adeps: Vec<usize> = cpf.action_refs().into_iter().collect();
        let mut eff = Vec::with_capacity(adeps.len());
        for &a in &adeps {
            affected[a].push(v);
            let deps = match cpf.specialize_action(a) {
                Ok(e) => e.state_refs().into_iter().collect(),
                // a fold error under one action leaves the syntactic set
                Err(_) => sdeps.clone(),
            };
            eff.push((a, deps));
        }
        state_deps.push(sdeps);
        action_deps.push(adeps);
        effect_deps.push(eff);
    }
    Dbn {
        state_deps,
        action_deps,
        effect_deps,
        affected,
    }
}
