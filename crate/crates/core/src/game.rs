//! Rules engine for a single expert game.
//!
//! Every player holds one expertise and one task. A task is completed by the
//! unique player whose expertise matches it (the player's *expert*). Players
//! exchange typed messages, at most one per round, and all staged messages are
//! delivered simultaneously when the round resolves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a participant, in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "player {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertiseId(pub usize);

/// Task `t` is completed by expertise `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub usize);

impl TaskId {
    pub fn matched_by(self, expertise: ExpertiseId) -> bool {
        self.0 == expertise.0
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("{0} is not a participant in this game")]
    NotAParticipant(PlayerId),
    #[error("rule violation: {0}")]
    RuleViolation(Rule),
    #[error("the game is over")]
    GameOver,
}

/// The rule a rejected action would have broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Messages go to another participant.
    NoSelfMessage,
    /// Replies only answer a received request.
    ReplyNeedsRequest,
    /// Confirmations only come from the receiver's expert.
    ConfirmationNeedsExpertise,
    /// Referrals need knowledge of the receiver's expert and may not come from the expert.
    ReferralNeedsKnowledge,
    /// Negations are only truthful without knowledge of the receiver's expert.
    NegationNeedsIgnorance,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Rule::NoSelfMessage => "messages must be sent to another participant",
            Rule::ReplyNeedsRequest => "a reply can only be sent to a player who sent you a request",
            Rule::ConfirmationNeedsExpertise => {
                "a confirmation can only be sent if your expertise matches the receiver's task"
            }
            Rule::ReferralNeedsKnowledge => {
                "a referral can only be sent if you are not the expert but know who is"
            }
            Rule::NegationNeedsIgnorance => {
                "a negation can only be sent if you do not know who the receiver's expert is"
            }
        };
        f.write_str(text)
    }
}

/// Deal of expertise and tasks for one game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct Assignment {
    expertise_of: Vec<ExpertiseId>,
    task_of: Vec<TaskId>,
    expert_of: Vec<PlayerId>,
}

#[derive(Serialize, Deserialize)]
struct RawAssignment {
    expertise: Vec<usize>,
    task: Vec<usize>,
}

impl TryFrom<RawAssignment> for Assignment {
    type Error = GameError;

    fn try_from(raw: RawAssignment) -> Result<Self, Self::Error> {
        Assignment::new(
            raw.expertise.into_iter().map(ExpertiseId).collect(),
            raw.task.into_iter().map(TaskId).collect(),
        )
    }
}

impl From<Assignment> for RawAssignment {
    fn from(a: Assignment) -> Self {
        RawAssignment {
            expertise: a.expertise_of.iter().map(|e| e.0).collect(),
            task: a.task_of.iter().map(|t| t.0).collect(),
        }
    }
}

fn is_permutation(values: impl Iterator<Item = usize>, n: usize) -> bool {
    let mut seen = vec![false; n];
    for v in values {
        if v >= n || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    seen.into_iter().all(|s| s)
}

impl Assignment {
    /// Builds an assignment from explicit bijections, rejecting any deal in
    /// which a player would be their own expert.
    pub fn new(expertise_of: Vec<ExpertiseId>, task_of: Vec<TaskId>) -> Result<Self, GameError> {
        let n = expertise_of.len();
        if n <= 2 {
            return Err(GameError::InvalidConfiguration(format!(
                "the game needs more than two players, got {n}"
            )));
        }
        if task_of.len() != n {
            return Err(GameError::InvalidConfiguration(
                "expertise and task lists differ in length".into(),
            ));
        }
        if !is_permutation(expertise_of.iter().map(|e| e.0), n) {
            return Err(GameError::InvalidConfiguration(
                "expertise is not a bijection".into(),
            ));
        }
        if !is_permutation(task_of.iter().map(|t| t.0), n) {
            return Err(GameError::InvalidConfiguration("tasks are not a bijection".into()));
        }
        let mut holder = vec![PlayerId(0); n];
        for (p, e) in expertise_of.iter().enumerate() {
            holder[e.0] = PlayerId(p);
        }
        let expert_of: Vec<PlayerId> = task_of.iter().map(|t| holder[t.0]).collect();
        if let Some(p) = (0..n).find(|&p| expert_of[p] == PlayerId(p)) {
            return Err(GameError::InvalidConfiguration(format!(
                "player {p} would be their own expert"
            )));
        }
        Ok(Assignment {
            expertise_of,
            task_of,
            expert_of,
        })
    }

    /// Uniform sample over all deals whose expert map has no fixed point.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, GameError> {
        if n <= 2 {
            return Err(GameError::InvalidConfiguration(format!(
                "the game needs more than two players, got {n}"
            )));
        }
        let mut expertise: Vec<usize> = (0..n).collect();
        let mut task: Vec<usize> = (0..n).collect();
        // Rejection keeps the accepted deals uniform; acceptance is about 1/e.
        loop {
            expertise.shuffle(rng);
            task.shuffle(rng);
            if expertise.iter().zip(&task).all(|(e, t)| e != t) {
                return Assignment::new(
                    expertise.iter().copied().map(ExpertiseId).collect(),
                    task.iter().copied().map(TaskId).collect(),
                );
            }
        }
    }

    pub fn n_players(&self) -> usize {
        self.expertise_of.len()
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.n_players()).map(PlayerId)
    }

    pub fn expertise_of(&self, p: PlayerId) -> ExpertiseId {
        self.expertise_of[p.0]
    }

    pub fn task_of(&self, p: PlayerId) -> TaskId {
        self.task_of[p.0]
    }

    /// The player whose expertise completes `p`'s task.
    pub fn expert_of(&self, p: PlayerId) -> PlayerId {
        self.expert_of[p.0]
    }

    pub fn expert_map(&self) -> &[PlayerId] {
        &self.expert_of
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageType {
    /// Request; reveals the sender's expertise and task.
    Q,
    /// Confirmation from the receiver's expert; scores a point.
    C,
    /// Referral; reveals the receiver's expert.
    R,
    /// Negation; the sender does not know the receiver's expert.
    N,
}

impl MessageType {
    pub const ALL: [MessageType; 4] = [MessageType::Q, MessageType::C, MessageType::R, MessageType::N];

    pub fn is_reply(self) -> bool {
        self != MessageType::Q
    }

    /// C and R count as positive replies.
    pub fn is_positive(self) -> bool {
        matches!(self, MessageType::C | MessageType::R)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MessageType::Q => "Q",
            MessageType::C => "C",
            MessageType::R => "R",
            MessageType::N => "N",
        };
        f.write_str(s)
    }
}

/// A delivered (or deliverable) message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub from: PlayerId,
    pub to: PlayerId,
    pub round: u32,
    /// The revealed expert, present on referrals only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<PlayerId>,
}

impl Message {
    pub fn outgoing(&self) -> Outgoing {
        Outgoing {
            kind: self.kind,
            to: self.to,
        }
    }
}

/// What a player asks to send; the engine fills in round and referral payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outgoing {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub to: PlayerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Send(Outgoing),
    Abstain,
}

/// Everything one player has learned during the current game.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PlayerKnowledge {
    pub known_expertise: BTreeMap<PlayerId, ExpertiseId>,
    pub known_task: BTreeMap<PlayerId, TaskId>,
    pub known_expert: Option<PlayerId>,
    /// Players who have sent this player at least one request.
    pub requesters: BTreeSet<PlayerId>,
}

impl PlayerKnowledge {
    /// The player known to hold `expertise`, if any.
    pub fn holder_of(&self, expertise: ExpertiseId) -> Option<PlayerId> {
        self.known_expertise
            .iter()
            .find(|(_, e)| **e == expertise)
            .map(|(p, _)| *p)
    }
}

/// Per-player knowledge for one game. Facts only accrue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeLedger {
    players: Vec<PlayerKnowledge>,
}

impl KnowledgeLedger {
    fn new(n: usize) -> Self {
        KnowledgeLedger {
            players: vec![PlayerKnowledge::default(); n],
        }
    }

    pub fn of(&self, p: PlayerId) -> &PlayerKnowledge {
        &self.players[p.0]
    }

    fn learn_from_request(&mut self, assignment: &Assignment, receiver: PlayerId, sender: PlayerId) {
        let k = &mut self.players[receiver.0];
        k.known_expertise.insert(sender, assignment.expertise_of(sender));
        k.known_task.insert(sender, assignment.task_of(sender));
        k.requesters.insert(sender);
        if assignment.expert_of(receiver) == sender {
            k.known_expert = Some(sender);
        }
    }

    fn learn_expert(&mut self, assignment: &Assignment, receiver: PlayerId, expert: PlayerId) {
        let k = &mut self.players[receiver.0];
        k.known_expert = Some(expert);
        k.known_expertise.insert(expert, assignment.expertise_of(expert));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub n_players: usize,
    pub round_limit: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEvent {
    pub player: PlayerId,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub round: u32,
    pub delivered: Vec<Message>,
    pub newly_scored: Vec<PlayerId>,
    pub finished: bool,
}

/// What a single seat is entitled to see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlayerView {
    pub me: PlayerId,
    pub round: u32,
    pub expertise: ExpertiseId,
    pub task: TaskId,
    pub known_expert: Option<PlayerId>,
    pub scored: bool,
    pub inbox: Vec<Message>,
    pub legal: Vec<Message>,
    pub knowledge: PlayerKnowledge,
}

#[derive(Debug, Clone)]
pub struct GameState {
    config: GameConfig,
    assignment: Assignment,
    round: u32,
    history: Vec<Message>,
    staged: Vec<Option<Outgoing>>,
    scored: Vec<bool>,
    scores: Vec<ScoreEvent>,
    knowledge: KnowledgeLedger,
}

impl GameState {
    pub fn new(assignment: Assignment, round_limit: u32) -> Result<Self, GameError> {
        if round_limit < 1 {
            return Err(GameError::InvalidConfiguration(
                "round limit must be at least 1".into(),
            ));
        }
        let n = assignment.n_players();
        Ok(GameState {
            config: GameConfig {
                n_players: n,
                round_limit,
            },
            assignment,
            round: 1,
            history: Vec::new(),
            staged: vec![None; n],
            scored: vec![false; n],
            scores: Vec::new(),
            knowledge: KnowledgeLedger::new(n),
        })
    }

    pub fn config(&self) -> GameConfig {
        self.config
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    pub fn knowledge(&self) -> &KnowledgeLedger {
        &self.knowledge
    }

    pub fn scores(&self) -> &[ScoreEvent] {
        &self.scores
    }

    pub fn is_scored(&self, p: PlayerId) -> bool {
        self.scored[p.0]
    }

    pub fn staged(&self, p: PlayerId) -> Option<Outgoing> {
        self.staged[p.0]
    }

    pub fn is_finished(&self) -> bool {
        self.round > self.config.round_limit
    }

    fn check_player(&self, p: PlayerId) -> Result<(), GameError> {
        if p.0 < self.config.n_players {
            Ok(())
        } else {
            Err(GameError::NotAParticipant(p))
        }
    }

    /// The reply `sender` is obliged to use towards `requester`, if any.
    fn reply_for(&self, sender: PlayerId, requester: PlayerId) -> Option<(MessageType, Option<PlayerId>)> {
        let k = self.knowledge.of(sender);
        let task = *k.known_task.get(&requester)?;
        if task.matched_by(self.assignment.expertise_of(sender)) {
            return Some((MessageType::C, None));
        }
        match k.holder_of(ExpertiseId(task.0)) {
            Some(expert) => Some((MessageType::R, Some(expert))),
            None => Some((MessageType::N, None)),
        }
    }

    /// Checks `out` against the rules for the current round and returns the
    /// message that would be delivered.
    pub fn validate(&self, player: PlayerId, out: Outgoing) -> Result<Message, GameError> {
        self.check_player(player)?;
        self.check_player(out.to)?;
        if self.is_finished() {
            return Err(GameError::GameOver);
        }
        if out.to == player {
            return Err(GameError::RuleViolation(Rule::NoSelfMessage));
        }
        let mut msg = Message {
            kind: out.kind,
            from: player,
            to: out.to,
            round: self.round,
            payload: None,
        };
        if out.kind == MessageType::Q {
            return Ok(msg);
        }
        let Some((allowed, payload)) = self.reply_for(player, out.to) else {
            return Err(GameError::RuleViolation(Rule::ReplyNeedsRequest));
        };
        if allowed == out.kind {
            msg.payload = payload;
            return Ok(msg);
        }
        let rule = match out.kind {
            MessageType::C => Rule::ConfirmationNeedsExpertise,
            MessageType::R => Rule::ReferralNeedsKnowledge,
            MessageType::N => Rule::NegationNeedsIgnorance,
            MessageType::Q => unreachable!("requests are always legal"),
        };
        Err(GameError::RuleViolation(rule))
    }

    /// All messages `player` may stage this round. Abstaining is always
    /// possible and not listed.
    pub fn legal_messages(&self, player: PlayerId) -> Result<Vec<Message>, GameError> {
        self.check_player(player)?;
        if self.is_finished() {
            return Err(GameError::GameOver);
        }
        let mut out = Vec::with_capacity(self.config.n_players);
        for other in self.assignment.players().filter(|&o| o != player) {
            out.push(Message {
                kind: MessageType::Q,
                from: player,
                to: other,
                round: self.round,
                payload: None,
            });
        }
        for &requester in &self.knowledge.of(player).requesters {
            if let Some((kind, payload)) = self.reply_for(player, requester) {
                out.push(Message {
                    kind,
                    from: player,
                    to: requester,
                    round: self.round,
                    payload,
                });
            }
        }
        Ok(out)
    }

    /// Stages `action` for the current round, replacing any earlier choice.
    pub fn stage_action(&mut self, player: PlayerId, action: Action) -> Result<(), GameError> {
        self.check_player(player)?;
        if self.is_finished() {
            return Err(GameError::GameOver);
        }
        self.staged[player.0] = match action {
            Action::Abstain => None,
            Action::Send(out) => {
                self.validate(player, out)?;
                Some(out)
            }
        };
        Ok(())
    }

    /// Delivers every staged message at once and advances the round.
    pub fn resolve_round(&mut self) -> Result<RoundOutcome, GameError> {
        if self.is_finished() {
            return Err(GameError::GameOver);
        }
        // Validate everything against the pre-delivery ledger first.
        let mut delivered = Vec::new();
        for p in 0..self.config.n_players {
            if let Some(out) = self.staged[p].take() {
                delivered.push(self.validate(PlayerId(p), out)?);
            }
        }
        let mut newly_scored = Vec::new();
        for msg in &delivered {
            match msg.kind {
                MessageType::Q => self
                    .knowledge
                    .learn_from_request(&self.assignment, msg.to, msg.from),
                MessageType::R => {
                    let expert = msg.payload.expect("referrals carry their payload");
                    self.knowledge.learn_expert(&self.assignment, msg.to, expert);
                }
                MessageType::C => {
                    if !self.scored[msg.to.0] {
                        self.scored[msg.to.0] = true;
                        newly_scored.push(msg.to);
                    }
                }
                MessageType::N => {}
            }
        }
        newly_scored.sort();
        self.scores.extend(newly_scored.iter().map(|&player| ScoreEvent {
            player,
            round: self.round,
        }));
        self.history.extend_from_slice(&delivered);
        let round = self.round;
        self.round += 1;
        Ok(RoundOutcome {
            round,
            delivered,
            newly_scored,
            finished: self.is_finished(),
        })
    }

    pub fn view(&self, player: PlayerId) -> Result<PlayerView, GameError> {
        self.check_player(player)?;
        let legal = if self.is_finished() {
            Vec::new()
        } else {
            self.legal_messages(player)?
        };
        let knowledge = self.knowledge.of(player).clone();
        Ok(PlayerView {
            me: player,
            round: self.round,
            expertise: self.assignment.expertise_of(player),
            task: self.assignment.task_of(player),
            known_expert: knowledge.known_expert,
            scored: self.scored[player.0],
            inbox: self.history.iter().filter(|m| m.to == player).copied().collect(),
            legal,
            knowledge,
        })
    }
}
