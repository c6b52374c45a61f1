//! Specialist calls: confidence rating, solo responses, independent
//! proposals and peer votes.

use serde_json::{Map, Value};

use super::{
    parse_final_content, AgentCtx, ConfidenceRating, DoctorError, Proposal, ProposalContent, SpecialistIdentity,
    TeamState, Vote, MAX_DIAGNOSES,
};
use crate::gateway::{CallKey, GatewayError};
use crate::prompts::render;
use crate::transcript::TranscriptEvent;
use crate::visit::VisitLog;

/// Attempt offset used when a duplicate question is regenerated.
const REGENERATION_ATTEMPT: u32 = 2;

/// Reads a `DECISION: <label>` reply. Only case and whitespace are forgiven.
pub fn parse_rating(reply: &str) -> Option<ConfidenceRating> {
    let line = reply
        .lines()
        .map(str::trim)
        .find_map(|l| {
            let lower = l.to_ascii_lowercase();
            lower.starts_with("decision").then(|| l["decision".len()..].trim_start().strip_prefix(':')).flatten()
        })
        .unwrap_or(reply);
    let normalized = line
        .trim()
        .trim_end_matches('.')
        .trim_matches('"')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    ConfidenceRating::ALL.into_iter().find(|r| r.label().to_lowercase() == normalized)
}

/// Strict AGREE / DISAGREE parse (case-insensitive, trimmed).
pub fn parse_vote(reply: &str) -> Option<Vote> {
    let t = reply
        .trim()
        .trim_start_matches(['-', ' '])
        .trim_matches(|c| c == '*' || c == '"' || c == '\'')
        .trim_end_matches('.')
        .trim();
    if t.eq_ignore_ascii_case("agree") {
        Some(Vote::Agree)
    } else if t.eq_ignore_ascii_case("disagree") {
        Some(Vote::Disagree)
    } else {
        None
    }
}

fn parse_confidence(value: Option<&Value>) -> Result<u8, String> {
    let n = match value {
        Some(Value::Number(n)) => n.as_u64(),
        Some(Value::String(s)) => s.trim().parse::<u64>().ok(),
        _ => None,
    };
    match n {
        Some(c @ 1..=5) => Ok(c as u8),
        _ => Err(format!(
            "CONFIDENCE must be an integer 1-5, found {}",
            value.map_or("nothing".into(), Value::to_string)
        )),
    }
}

fn rationale(obj: &Map<String, Value>) -> String {
    obj.get("RATIONALE").and_then(Value::as_str).unwrap_or_default().to_string()
}

fn question_text(obj: &Map<String, Value>) -> Result<String, String> {
    match obj.get("RESPONSE_CONTENT") {
        Some(Value::String(q)) if !q.trim().is_empty() => Ok(q.trim().to_string()),
        _ => Err("RESPONSE_CONTENT must be a non-empty question".into()),
    }
}

fn truncate_diagnoses(ctx: &AgentCtx<'_>, key: &CallKey, mut names: Vec<String>) -> Vec<String> {
    if names.len() > MAX_DIAGNOSES {
        ctx.gateway.violation(
            key,
            format!("{} diagnoses returned; keeping the first {MAX_DIAGNOSES}", names.len()),
            None,
        );
        names.truncate(MAX_DIAGNOSES);
    }
    names
}

fn note_proposal(ctx: &AgentCtx<'_>, round: u32, p: &Proposal) {
    ctx.gateway.note(TranscriptEvent::Proposal {
        round,
        specialist: p.specialist.name().to_string(),
        response_type: p.content.response_type().as_str().to_string(),
        content: p.content.to_value(),
        confidence: p.confidence,
        rationale: p.rationale.clone(),
    });
}

/// Solo protocol step one. Unparseable ratings fall back to
/// `VeryUnconfident` so the specialist asks rather than guesses.
pub fn rate_confidence(
    ctx: &AgentCtx<'_>,
    specialist: &SpecialistIdentity,
    log: &VisitLog,
    round: u32,
) -> Result<ConfidenceRating, DoctorError> {
    let key = ctx.key(format!("confidence:{}", specialist.key()), round);
    let system = render(&ctx.settings.prompts.confidence, &[("spec", specialist.name())]);
    let request = ctx.specialist_request(system, log.render(), true);
    let reminder = "Respond with exactly one line: DECISION: followed by one of the five ratings.";
    match ctx.gateway.complete_parsed(&key, &request, reminder, parse_rating) {
        Ok(r) => Ok(r),
        Err(e @ GatewayError::ProtocolViolation { .. }) => {
            ctx.gateway.violation(
                &key,
                "confidence rating unparseable; treating as Very Unconfident",
                e.raw_reply().map(str::to_string),
            );
            Ok(ConfidenceRating::VeryUnconfident)
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the diagnosis prompt for one specialist. `role` prefixes the call key
/// (`solo_diagnosis` or `final_diagnosis`).
pub(crate) fn solo_diagnose(
    ctx: &AgentCtx<'_>,
    specialist: &SpecialistIdentity,
    log: &VisitLog,
    round: u32,
    role: &str,
    confidence: u8,
) -> Result<Proposal, DoctorError> {
    let key = ctx.key(format!("{role}:{}", specialist.key()), round);
    let system = render(&ctx.settings.prompts.solo_diagnosis, &[("spec", specialist.name())]);
    let request = ctx.specialist_request(system, log.render(), false);
    let format = &ctx.settings.answer_format;
    let (names, why) =
        ctx.gateway.complete_validated(&key, &request, &["RESPONSE_TYPE", "RESPONSE_CONTENT", "RATIONALE"], |obj| {
            let names = parse_final_content(obj.get("RESPONSE_CONTENT").unwrap_or(&Value::Null), format)?;
            Ok((names, rationale(obj)))
        })?;
    let proposal = Proposal {
        specialist: specialist.clone(),
        content: ProposalContent::Diagnosis(truncate_diagnoses(ctx, &key, names)),
        confidence,
        rationale: why,
    };
    note_proposal(ctx, round, &proposal);
    Ok(proposal)
}

fn ask_question(
    ctx: &AgentCtx<'_>,
    key: &CallKey,
    system: &str,
    user: String,
) -> Result<(String, String), GatewayError> {
    let request = ctx.specialist_request(system.to_string(), user, false);
    ctx.gateway.complete_validated(key, &request, &["RESPONSE_TYPE", "RESPONSE_CONTENT", "RATIONALE"], |obj| {
        Ok((question_text(obj)?, rationale(obj)))
    })
}

/// Solo protocol step two: diagnose when `rating` reaches the configured
/// threshold, otherwise ask a follow-up question that has not been asked yet.
pub fn solo_respond(
    ctx: &AgentCtx<'_>,
    specialist: &SpecialistIdentity,
    log: &VisitLog,
    rating: ConfidenceRating,
    round: u32,
) -> Result<Proposal, DoctorError> {
    if rating >= ctx.settings.diagnose_threshold {
        return solo_diagnose(ctx, specialist, log, round, "solo_diagnosis", rating.score());
    }
    let key = ctx.key(format!("solo_question:{}", specialist.key()), round);
    let system = render(&ctx.settings.prompts.solo_question, &[("spec", specialist.name())]);
    let (mut question, mut why) = ask_question(ctx, &key, &system, log.render())?;
    if log.asked(&question) {
        ctx.gateway.violation(&key, format!("repeated question '{question}'; regenerating"), None);
        let regen_key = CallKey { attempt: REGENERATION_ATTEMPT, ..key.clone() };
        let user = format!(
            "{}\n\nThe question \"{question}\" has already been asked. Propose a different question.",
            log.render()
        );
        (question, why) = ask_question(ctx, &regen_key, &system, user)?;
        if log.asked(&question) {
            ctx.gateway.violation(&regen_key, "regenerated question is still a repeat", None);
        }
    }
    let proposal = Proposal {
        specialist: specialist.clone(),
        content: ProposalContent::Question(question),
        confidence: rating.score(),
        rationale: why,
    };
    note_proposal(ctx, round, &proposal);
    Ok(proposal)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collected {
    /// One proposal per responding member, in roster order.
    pub proposals: Vec<Proposal>,
    pub abstentions: Vec<SpecialistIdentity>,
}

/// Gathers one independent proposal per member. With `force_diagnosis` every
/// member must answer with a diagnosis.
pub fn collect_proposals(
    ctx: &AgentCtx<'_>,
    team: &TeamState,
    log: &VisitLog,
    round: u32,
    force_diagnosis: bool,
) -> Result<Collected, DoctorError> {
    let prompts = &ctx.settings.prompts;
    let format = &ctx.settings.answer_format;
    let role = if force_diagnosis { "final_propose" } else { "propose" };
    let user =
        if force_diagnosis { format!("{}\n\n{}", log.render(), prompts.final_diagnosis.trim()) } else { log.render() };
    let mut collected = Collected { proposals: Vec::new(), abstentions: Vec::new() };
    for member in team.members() {
        let key = ctx.key(format!("{role}:{}", member.key()), round);
        let system = render(&prompts.proposal, &[("spec", member.name())]);
        let request = ctx.specialist_request(system, user.clone(), false);
        let result = ctx.gateway.complete_validated(
            &key,
            &request,
            &["RESPONSE_TYPE", "RESPONSE_CONTENT", "CONFIDENCE", "RATIONALE"],
            |obj| {
                let kind = obj.get("RESPONSE_TYPE").and_then(Value::as_str).unwrap_or_default().trim().to_lowercase();
                let content = match kind.as_str() {
                    "diagnosis" => ProposalContent::Diagnosis(parse_final_content(
                        obj.get("RESPONSE_CONTENT").unwrap_or(&Value::Null),
                        format,
                    )?),
                    "question" if force_diagnosis => return Err("a diagnosis is required now".into()),
                    "question" => ProposalContent::Question(question_text(obj)?),
                    other => return Err(format!("RESPONSE_TYPE must be diagnosis or question, found '{other}'")),
                };
                Ok((content, parse_confidence(obj.get("CONFIDENCE"))?, rationale(obj)))
            },
        );
        match result {
            Ok((content, confidence, why)) => {
                let content = match content {
                    ProposalContent::Diagnosis(names) => {
                        ProposalContent::Diagnosis(truncate_diagnoses(ctx, &key, names))
                    }
                    q => q,
                };
                let proposal = Proposal { specialist: member.clone(), content, confidence, rationale: why };
                note_proposal(ctx, round, &proposal);
                collected.proposals.push(proposal);
            }
            Err(e @ GatewayError::ProtocolViolation { .. }) => {
                ctx.gateway.violation(&key, format!("{member} abstains: {e}"), e.raw_reply().map(str::to_string));
                ctx.gateway.note(TranscriptEvent::Abstention {
                    round,
                    specialist: member.name().to_string(),
                    reason: e.to_string(),
                });
                collected.abstentions.push(member.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if collected.proposals.is_empty() {
        return Err(DoctorError::AllAbstained { round });
    }
    Ok(collected)
}

/// One peer vote. Noncompliant replies (after one repair) count as DISAGREE.
pub fn vote(
    ctx: &AgentCtx<'_>,
    voter: &SpecialistIdentity,
    candidate: &Proposal,
    log: &VisitLog,
    round: u32,
) -> Result<Vote, DoctorError> {
    let key = ctx.key(format!("vote:{}:{}", voter.key(), candidate.specialist.key()), round);
    let content = candidate.content.as_text();
    let system = render(
        &ctx.settings.prompts.vote,
        &[
            ("voter", voter.name()),
            ("candidate", candidate.specialist.name()),
            ("response_type", candidate.content.response_type().as_str()),
            ("content", &content),
            ("rationale", &candidate.rationale),
        ],
    );
    let request = ctx.specialist_request(system, log.render(), true);
    let ballot = match ctx.gateway.complete_parsed(&key, &request, "Respond with ONLY AGREE or DISAGREE.", parse_vote) {
        Ok(v) => v,
        Err(e @ GatewayError::ProtocolViolation { .. }) => {
            ctx.gateway.violation(&key, "vote unparseable; counted as DISAGREE", e.raw_reply().map(str::to_string));
            Vote::Disagree
        }
        Err(e) => return Err(e.into()),
    };
    ctx.gateway.note(TranscriptEvent::Vote {
        round,
        voter: voter.name().to_string(),
        candidate: candidate.specialist.name().to_string(),
        vote: match ballot {
            Vote::Agree => "AGREE".into(),
            Vote::Disagree => "DISAGREE".into(),
        },
    });
    Ok(ballot)
}
