//! The interaction loop: triage, specialist response, patient answer, team
//! adjustment, until a diagnosis is accepted or the round cap forces one.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::doctor::{
    adjust_team, collect_proposals, evaluation_order, rate_confidence, required_agreements, resolve_consensus,
    solo_respond, triage_specialists, vote, AgentCtx, AnswerFormat, ConfidenceRating, DoctorError, DoctorSettings,
    Proposal, ProposalContent, TeamState, MAX_TEAM_SIZE,
};
use crate::gateway::{Gateway, CATEGORICAL_TEMPERATURE, GENERATIVE_TEMPERATURE};
use crate::patient::PatientResponder;
use crate::prompts::PromptSet;
use crate::transcript::{Transcript, TranscriptEvent};
use crate::visit::VisitLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// One fixed specialist, confidence-gated.
    Solo,
    /// A dynamic team with propose/vote consensus.
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelNames {
    pub central: String,
    pub specialist: String,
    pub patient: String,
}

impl Default for ModelNames {
    fn default() -> Self {
        Self { central: "gpt-4.1".into(), specialist: "gpt-4.1".into(), patient: "gpt-4.1".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub generative: f64,
    pub categorical: f64,
    pub patient: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self {
            generative: GENERATIVE_TEMPERATURE,
            categorical: CATEGORICAL_TEMPERATURE,
            patient: CATEGORICAL_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub max_rounds: u32,
    pub protocol: Protocol,
    pub agreement_threshold: f64,
    pub diagnose_threshold: ConfidenceRating,
    pub seed: u64,
    pub models: ModelNames,
    pub temperature: Temperatures,
    pub answer_format: AnswerFormat,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_rounds: 15,
            protocol: Protocol::Multi,
            agreement_threshold: 0.5,
            diagnose_threshold: ConfidenceRating::SomewhatConfident,
            seed: 0,
            models: ModelNames::default(),
            temperature: Temperatures::default(),
            answer_format: AnswerFormat::OpenEnded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_rounds must be at least 1")]
    MaxRounds,
    #[error("agreement_threshold must lie in [0, 1], got {0}")]
    Threshold(String),
    #[error("{0} temperature must lie in [0, 2]")]
    Temperature(&'static str),
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_rounds < 1 {
            return Err(ConfigError::MaxRounds);
        }
        if !(0.0..=1.0).contains(&self.agreement_threshold) {
            return Err(ConfigError::Threshold(self.agreement_threshold.to_string()));
        }
        for (name, t) in [
            ("generative", self.temperature.generative),
            ("categorical", self.temperature.categorical),
            ("patient", self.temperature.patient),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError::Temperature(name));
            }
        }
        Ok(())
    }

    pub fn doctor_settings(&self) -> DoctorSettings {
        let prompts = match self.answer_format {
            AnswerFormat::OpenEnded => PromptSet::open_ended(),
            AnswerFormat::MultipleChoice { .. } => PromptSet::multiple_choice(),
        };
        DoctorSettings {
            prompts,
            central_model: self.models.central.clone(),
            specialist_model: self.models.specialist.clone(),
            generative_temperature: self.temperature.generative,
            categorical_temperature: self.temperature.categorical,
            diagnose_threshold: self.diagnose_threshold,
            agreement_threshold: self.agreement_threshold,
            max_team_size: match self.protocol {
                Protocol::Solo => 1,
                Protocol::Multi => MAX_TEAM_SIZE,
            },
            answer_format: self.answer_format.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Diagnosis,
    RoundCap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResult {
    pub patient_id: String,
    pub final_diagnoses: Vec<String>,
    /// Specialist rounds including the final diagnosis round.
    pub rounds_used: u32,
    pub questions_asked: u32,
    pub stop_reason: StopReason,
    pub visit_log: VisitLog,
    pub team_history: Vec<TeamState>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("session {patient_id} aborted: {reason}")]
pub struct SessionAbort {
    pub patient_id: String,
    pub reason: String,
}

/// Everything a session produced: the full event list (ending in a result or
/// an abort marker) and the outcome.
#[derive(Debug, Clone)]
pub struct SessionRun {
    pub events: Vec<TranscriptEvent>,
    pub outcome: Result<SessionResult, SessionAbort>,
}

fn consensus(
    ctx: &AgentCtx<'_>,
    team: &TeamState,
    log: &VisitLog,
    round: u32,
    proposals: Vec<Proposal>,
) -> Result<Proposal, DoctorError> {
    let threshold = ctx.settings.agreement_threshold;
    let required = required_agreements(threshold, team.len());
    let mut votes = BTreeMap::new();
    // Ballots are gathered lazily: once a proposal meets the threshold the
    // remaining ones are never voted on.
    for i in evaluation_order(&proposals) {
        let candidate = &proposals[i];
        let mut ballots = Vec::new();
        for voter in team.members().iter().filter(|m| **m != candidate.specialist) {
            ballots.push(vote(ctx, voter, candidate, log, round)?);
        }
        let agrees = ballots.iter().filter(|b| **b == crate::doctor::Vote::Agree).count();
        votes.insert(i, ballots);
        if agrees >= required {
            break;
        }
    }
    let outcome = resolve_consensus(&proposals, &votes, threshold, team.len())?;
    let accepted = proposals.into_iter().nth(outcome.index).expect("index from resolve_consensus");
    ctx.gateway.note(TranscriptEvent::Consensus {
        round,
        accepted: accepted.specialist.name().to_string(),
        rule: serde_json::to_value(outcome.rule).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
    });
    Ok(accepted)
}

/// One specialist round: the solo branch for one-member teams, propose/vote
/// otherwise.
fn specialist_round(ctx: &AgentCtx<'_>, team: &TeamState, log: &VisitLog, round: u32) -> Result<Proposal, DoctorError> {
    if team.len() == 1 {
        let specialist = &team.members()[0];
        let rating = rate_confidence(ctx, specialist, log, round)?;
        return solo_respond(ctx, specialist, log, rating, round);
    }
    let collected = collect_proposals(ctx, team, log, round, false)?;
    consensus(ctx, team, log, round, collected.proposals)
}

/// Best-effort diagnosis once the round cap is reached.
pub fn force_final_diagnosis(
    ctx: &AgentCtx<'_>,
    team: &TeamState,
    log: &VisitLog,
    round: u32,
) -> Result<Vec<String>, DoctorError> {
    let accepted = if team.len() == 1 {
        crate::doctor::solo_diagnose(ctx, &team.members()[0], log, round, "final_diagnosis", 0)?
    } else {
        let collected = collect_proposals(ctx, team, log, round, true)?;
        consensus(ctx, team, log, round, collected.proposals)?
    };
    match accepted.content {
        ProposalContent::Diagnosis(names) => Ok(names),
        ProposalContent::Question(_) => Err(DoctorError::Protocol("forced round produced a question".into())),
    }
}

fn drive(
    patient: &dyn PatientResponder,
    config: &SessionConfig,
    ctx: &AgentCtx<'_>,
    transcript: &Transcript,
) -> Result<SessionResult, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let mut log = VisitLog::new(patient.initial_presentation());
    let mut team = triage_specialists(ctx, &log).map_err(|e| err(&e))?;
    log.team_history.push(team.clone());

    let (final_diagnoses, stop_reason) = loop {
        let questions = log.turns().len() as u32;
        let round = questions + 1;
        if questions >= config.max_rounds {
            let names = force_final_diagnosis(ctx, &team, &log, round).map_err(|e| err(&e))?;
            break (names, StopReason::RoundCap);
        }
        let accepted = specialist_round(ctx, &team, &log, round).map_err(|e| err(&e))?;
        let question = match accepted.content {
            ProposalContent::Diagnosis(names) => break (names, StopReason::Diagnosis),
            ProposalContent::Question(q) => q,
        };
        let answer = patient.answer(ctx.gateway, round, &question).map_err(|e| err(&e))?;
        log.append(&question, &answer.text, answer.stage).map_err(|e| err(&e))?;
        ctx.gateway.note(TranscriptEvent::Turn {
            round,
            question,
            answer: answer.text,
            stage: answer.stage,
            matched_sections: answer.matched_sections,
        });
        if config.protocol == Protocol::Multi {
            let next = adjust_team(ctx, &log, &team, round).map_err(|e| err(&e))?;
            if !next.same_members(&team) {
                log.team_history.push(next.clone());
            }
            team = next;
        }
    };

    let questions_asked = log.turns().len() as u32;
    Ok(SessionResult {
        patient_id: patient.patient_id().to_string(),
        final_diagnoses,
        rounds_used: questions_asked + 1,
        questions_asked,
        stop_reason,
        team_history: log.team_history.clone(),
        visit_log: log,
        violations: transcript.violations(),
    })
}

/// Runs one patient session through `gateway`, recording every exchange.
pub fn run_session(patient: &dyn PatientResponder, config: &SessionConfig, gateway: &Gateway) -> SessionRun {
    let transcript = Arc::new(Transcript::new());
    let gw = gateway.recording(Arc::clone(&transcript));
    let settings = config.doctor_settings();
    let session = patient.patient_id().to_string();
    let ctx = AgentCtx::new(&gw, &session, &settings);
    gw.note(TranscriptEvent::Start {
        patient_id: session.clone(),
        config: serde_json::to_value(config).expect("config serializes"),
        prompt_version: settings.prompts.version.clone(),
    });

    let outcome = match drive(patient, config, &ctx, &transcript) {
        Ok(result) => {
            gw.note(TranscriptEvent::Result(Box::new(result.clone())));
            Ok(result)
        }
        Err(reason) => {
            tracing::error!(patient = %session, "session aborted: {reason}");
            gw.note(TranscriptEvent::Abort { patient_id: session.clone(), reason: reason.clone() });
            Err(SessionAbort { patient_id: session, reason })
        }
    };
    SessionRun { events: transcript.events(), outcome }
}
