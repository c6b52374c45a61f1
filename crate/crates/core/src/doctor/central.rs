//! Central Agent: initial triage and per-round team adjustment.

use serde_json::{Map, Value};

use super::{parse_name_list, AgentCtx, DoctorError, SpecialistIdentity, TeamState, TeamUpdate, MAX_TEAM_SIZE};
use crate::prompts::render;
use crate::transcript::TranscriptEvent;
use crate::visit::VisitLog;

const TRIAGE_ROLE: &str = "central_triage";
const ADJUST_ROLE: &str = "central_adjust";

fn identities(value: Option<&Value>) -> Result<Vec<SpecialistIdentity>, String> {
    let names = match value {
        Some(v) => parse_name_list(v)?,
        None => Vec::new(),
    };
    Ok(names.iter().filter_map(|n| SpecialistIdentity::new(n)).collect())
}

fn rationale(obj: &Map<String, Value>) -> String {
    obj.get("RATIONALE").and_then(Value::as_str).unwrap_or_default().to_string()
}

/// Case-insensitive dedup preserving first spelling and order.
fn dedup(list: Vec<SpecialistIdentity>) -> (Vec<SpecialistIdentity>, bool) {
    let mut out: Vec<SpecialistIdentity> = Vec::with_capacity(list.len());
    let mut merged = false;
    for s in list {
        if out.contains(&s) {
            merged = true;
        } else {
            out.push(s);
        }
    }
    (out, merged)
}

/// Forms the initial team from the initial presentation.
pub fn triage_specialists(ctx: &AgentCtx<'_>, log: &VisitLog) -> Result<TeamState, DoctorError> {
    let key = ctx.key(TRIAGE_ROLE, 0);
    let system = render(&ctx.settings.prompts.triage, &[]);
    let request = ctx.central_request(system, log.render());
    let (suggested, why) = ctx.gateway.complete_validated(&key, &request, &["SUGGEST_SPECIALISTS"], |obj| {
        let list = identities(obj.get("SUGGEST_SPECIALISTS"))?;
        if list.is_empty() {
            return Err("SUGGEST_SPECIALISTS is empty".into());
        }
        Ok((list, rationale(obj)))
    })?;

    let (mut members, merged) = dedup(suggested);
    if merged {
        ctx.gateway.violation(&key, "duplicate specialists merged", None);
    }
    if members.len() > MAX_TEAM_SIZE {
        ctx.gateway.violation(
            &key,
            format!("{} specialists suggested; keeping the first {MAX_TEAM_SIZE}", members.len()),
            None,
        );
    }
    // A smaller configured cap (the solo protocol) is not a model error.
    members.truncate(ctx.settings.max_team_size.min(MAX_TEAM_SIZE));
    let team = TeamState::new(members, 1).map_err(|e| DoctorError::Protocol(e.to_string()))?;
    ctx.gateway.note(TranscriptEvent::TeamChange {
        round: 0,
        previous: Vec::new(),
        updated: team.names(),
        add: team.names(),
        remove: Vec::new(),
        rationale: why,
    });
    Ok(team)
}

/// Applies an update to `previous`, returning the resulting roster and any
/// warnings. `UPDATED_LIST` wins over ADD/REMOVE arithmetic when they
/// disagree; an empty `UPDATED_LIST` keeps the previous roster.
pub fn apply_update(
    previous: &TeamState,
    update: &TeamUpdate,
    max_team_size: usize,
) -> (Vec<SpecialistIdentity>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut computed: Vec<SpecialistIdentity> = previous.members().to_vec();
    for a in &update.add {
        if !computed.contains(a) {
            computed.push(a.clone());
        }
    }
    for r in &update.remove {
        if previous.contains(r) {
            computed.retain(|m| m != r);
        } else {
            warnings.push(format!("cannot remove '{r}': not a team member"));
        }
    }

    let mut result = if update.updated_list.is_empty() {
        warnings.push("empty UPDATED_LIST; previous team retained".into());
        previous.members().to_vec()
    } else {
        let (updated, merged) = dedup(update.updated_list.clone());
        if merged {
            warnings.push("duplicate specialists merged in UPDATED_LIST".into());
        }
        let same_set = updated.len() == computed.len() && updated.iter().all(|m| computed.contains(m));
        if !same_set {
            warnings.push(format!(
                "UPDATED_LIST [{}] disagrees with ADD/REMOVE result [{}]; using UPDATED_LIST",
                join(&updated),
                join(&computed)
            ));
        }
        updated
    };
    if result.len() > max_team_size {
        warnings.push(format!("{} specialists exceed the cap; keeping the first {max_team_size}", result.len()));
        result.truncate(max_team_size);
    }
    (result, warnings)
}

fn join(list: &[SpecialistIdentity]) -> String {
    list.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
}

/// Re-evaluates the team after the answer of `round`. Never fails: protocol
/// problems keep the previous team and are logged as violations.
pub fn adjust_team(ctx: &AgentCtx<'_>, log: &VisitLog, team: &TeamState, round: u32) -> Result<TeamState, DoctorError> {
    let key = ctx.key(ADJUST_ROLE, round);
    let system = render(&ctx.settings.prompts.coordination, &[]);
    let user = format!("{}\n\nCurrent specialist team: [{}]", log.render(), join(team.members()));
    let request = ctx.central_request(system, user);
    let parsed = ctx.gateway.complete_validated(&key, &request, &["ADD", "REMOVE", "UPDATED_LIST"], |obj| {
        Ok(TeamUpdate {
            add: identities(obj.get("ADD"))?,
            remove: identities(obj.get("REMOVE"))?,
            updated_list: identities(obj.get("UPDATED_LIST"))?,
            rationale: rationale(obj),
        })
    });
    let update = match parsed {
        Ok(u) => u,
        Err(e @ crate::gateway::GatewayError::ProtocolViolation { .. }) => {
            ctx.gateway.violation(
                &key,
                format!("team adjustment unusable, keeping team: {e}"),
                e.raw_reply().map(str::to_string),
            );
            return Ok(team.clone());
        }
        Err(e) => return Err(e.into()),
    };

    let (members, warnings) = apply_update(team, &update, ctx.settings.max_team_size);
    for w in warnings {
        ctx.gateway.violation(&key, w, None);
    }
    let next = match TeamState::new(members, round + 1) {
        Ok(t) => t,
        Err(e) => {
            ctx.gateway.violation(&key, format!("invalid team update ({e}); keeping team"), None);
            return Ok(team.clone());
        }
    };
    if next.same_members(team) {
        return Ok(team.clone());
    }
    let added: Vec<String> =
        next.members().iter().filter(|m| !team.contains(m)).map(|m| m.name().to_string()).collect();
    let removed: Vec<String> =
        team.members().iter().filter(|m| !next.contains(m)).map(|m| m.name().to_string()).collect();
    ctx.gateway.note(TranscriptEvent::TeamChange {
        round,
        previous: team.names(),
        updated: next.names(),
        add: added,
        remove: removed,
        rationale: update.rationale,
    });
    Ok(next)
}
