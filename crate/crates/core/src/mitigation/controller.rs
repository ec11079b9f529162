use std::collections::BTreeSet;

use ipnet::Ipv4Net;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{allocate_alias, compile_rules, controller_nat, MitigationError, MitigationPlan, Variant};
use crate::flow::{process, Disposition, EntryId, FlowError, SharedFlowTable};
use crate::packet::{HostIdentity, PacketHeaderView};

#[derive(Clone, Debug, PartialEq)]
pub struct MitigationSettings {
    pub alias_subnet: Ipv4Net,
    pub variant: Variant,
    /// Seconds the previous alias stays valid after a rotation.
    pub grace: f64,
    /// Rotate the alias this often while active.
    pub rotate_every: Option<f64>,
}

/// Owns a switch table and at most one active plan. Plan changes are
/// applied to the table as single atomic replacements.
pub struct MitigationController {
    settings: MitigationSettings,
    table: SharedFlowTable,
    plan: Option<MitigationPlan>,
    installed: Vec<EntryId>,
    last_rotation: f64,
    rng: ChaCha20Rng,
}

impl MitigationController {
    /// Alias draws use a generator seeded from OS entropy.
    pub fn new(settings: MitigationSettings) -> Self {
        Self::with_rng(settings, ChaCha20Rng::from_entropy())
    }

    /// Reproducible alias sequence, for simulations.
    pub fn with_seed(settings: MitigationSettings, seed: u64) -> Self {
        Self::with_rng(settings, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(settings: MitigationSettings, rng: ChaCha20Rng) -> Self {
        MitigationController {
            settings,
            table: SharedFlowTable::new(),
            plan: None,
            installed: Vec::new(),
            last_rotation: 0.0,
            rng,
        }
    }

    pub fn settings(&self) -> &MitigationSettings {
        &self.settings
    }

    pub fn plan(&self) -> Option<&MitigationPlan> {
        self.plan.as_ref()
    }

    pub fn table(&self) -> &SharedFlowTable {
        &self.table
    }

    pub fn is_active(&self) -> bool {
        self.plan.is_some()
    }

    /// Starts protecting `target` against responses from `attack_port`.
    /// Does nothing if a plan is already active.
    pub fn activate(
        &mut self,
        target: HostIdentity,
        attack_port: u16,
        now: f64,
    ) -> Result<&MitigationPlan, MitigationError> {
        if self.plan.is_none() {
            let in_use = BTreeSet::from([target.ip]);
            let alias = allocate_alias(self.settings.alias_subnet, &in_use, &mut self.rng)?;
            let plan = MitigationPlan::new(
                target,
                self.settings.alias_subnet,
                alias,
                attack_port,
                self.settings.variant,
                now,
            )?;
            self.last_rotation = now;
            self.commit(plan)?;
        }
        Ok(self.plan.as_ref().expect("just set"))
    }

    /// Advances time: expires the previous alias and rotates when due.
    pub fn tick(&mut self, now: f64) -> Result<(), MitigationError> {
        let Some(plan) = &self.plan else { return Ok(()) };
        if let Some(every) = self.settings.rotate_every {
            if now - self.last_rotation >= every {
                return self.rotate(now);
            }
        }
        let mut next = plan.clone();
        if next.expire(now) {
            self.commit(next)?;
        }
        Ok(())
    }

    pub fn rotate(&mut self, now: f64) -> Result<(), MitigationError> {
        let plan = self.plan.as_ref().ok_or(MitigationError::Inactive)?;
        let next = plan.rotate(now, self.settings.grace, &mut self.rng)?;
        self.last_rotation = now;
        self.commit(next)
    }

    /// Removes every rule of the active plan. Returns the removed ids; a
    /// second call returns an empty list.
    pub fn deactivate(&mut self) -> Vec<EntryId> {
        self.plan = None;
        let ids = std::mem::take(&mut self.installed);
        self.table.remove(&ids);
        ids
    }

    fn commit(&mut self, plan: MitigationPlan) -> Result<(), MitigationError> {
        let rules = compile_rules(&plan);
        let ids: Vec<EntryId> = rules.iter().map(|r| r.id.clone()).collect();
        self.table.replace(&self.installed, rules)?;
        self.installed = ids;
        self.plan = Some(plan);
        Ok(())
    }

    /// Runs one packet through the switch table, with the NAT callback
    /// attached for the controller-assisted program.
    pub fn process(&self, view: &PacketHeaderView) -> Result<Disposition, FlowError> {
        let table = self.table.snapshot();
        match &self.plan {
            Some(plan) => {
                let nat = |v: &PacketHeaderView| Ok(controller_nat(plan, v));
                process(&table, view, Some(&nat))
            }
            None => process(&table, view, None),
        }
    }
}
