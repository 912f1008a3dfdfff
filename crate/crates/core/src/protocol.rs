//! Round orchestration for FedSGD, plaintext FFLX and the encrypted
//! GBPPFFL protocol.
//!
//! Every round is a fixed sequence of phases. Channels are simulated: a
//! message handed to a party is visible to that party only, and the server
//! side of the encrypted round consumes nothing but the [`ToServer`]
//! messages addressed to it plus its own plaintext reputations.

use fairfed_he::{CiphertextVector, HeBackend, KeyMaterial, Plaintext};
use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{
    self, build_mask, contribution, contribution_from_scalars, normalize_gradient,
    relative_reputation, reward_gradient, update_reputations, FairnessParams, Mask, MaskSource,
    MaskStrategy, ReputationState,
};
use crate::nn::{Dataset, ModelParams};
use crate::seeds::{self, Stream};

#[derive(Clone, Debug)]
pub struct Participant {
    pub id: usize,
    pub model: ModelParams,
    pub data: Dataset,
}

impl Participant {
    pub fn new(id: usize, model: ModelParams, data: Dataset) -> Self {
        Self { id, model, data }
    }

    fn gradient(&self, ctx: &RoundContext) -> Result<Vec<f64>> {
        let batch = batch_indices(
            self.data.len(),
            ctx.batch_size,
            ctx.seed,
            ctx.round,
            self.id,
        );
        self.model.local_gradient(&self.data, &batch)
    }

    fn normalized_gradient(&self, ctx: &RoundContext, delta: f64) -> Result<Vec<f64>> {
        normalize_gradient(&self.gradient(ctx)?, delta)
    }

    fn step(&mut self, update: &[f64], learning_rate: f64) -> Result<()> {
        self.model = self.model.apply_update(update, learning_rate)?;
        Ok(())
    }
}

/// Sample indices used by participant `id` in `round`: the whole local set
/// unless `batch_size` is smaller.
pub fn batch_indices(
    len: usize,
    batch_size: Option<usize>,
    seed: u64,
    round: usize,
    id: usize,
) -> Vec<usize> {
    match batch_size {
        Some(b) if b < len => {
            let mut rng = seeds::rng(seed, Stream::Batching, &[round as u64, id as u64]);
            let mut picked = index::sample(&mut rng, len, b).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..len).collect(),
    }
}

/// Per-round settings shared by all schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundContext {
    /// 1-based round index.
    pub round: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    /// Largest accepted gap between the two reports of one contribution.
    pub phi_tolerance: f64,
}

/// Server-side state. `K` is `()` for the plaintext schemes and
/// [`ServerKeys`] for the encrypted one; no variant can hold a secret key.
#[derive(Debug)]
pub struct ServerState<K = ()> {
    pub reputation: ReputationState,
    pub fairness: FairnessParams,
    keys: K,
}

impl ServerState {
    pub fn new(reputation: ReputationState, fairness: FairnessParams) -> Result<Self> {
        fairness.validate()?;
        Ok(Self {
            reputation,
            fairness,
            keys: (),
        })
    }
}

impl<K> ServerState<K> {
    pub fn with_keys<L>(self, keys: L) -> ServerState<L> {
        ServerState {
            reputation: self.reputation,
            fairness: self.fairness,
            keys,
        }
    }

    pub fn keys(&self) -> &K {
        &self.keys
    }

    fn update(&mut self, phi: &[f64]) -> Result<()> {
        let admitted: Vec<f64> = phi
            .iter()
            .map(|&p| self.fairness.admitted_contribution(p))
            .collect();
        let mut next = update_reputations(&self.reputation, &admitted, self.fairness.alpha)?;
        next.phi = phi.to_vec();
        next.q = relative_reputation(&next.r, &self.fairness)?;
        self.reputation = next;
        Ok(())
    }
}

pub struct ServerKeys<B: HeBackend> {
    pub public: B::PublicKey,
    pub evaluation: B::EvaluationKey,
}

impl<B: HeBackend> std::fmt::Debug for ServerKeys<B> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ServerKeys")
    }
}

pub struct ParticipantKeys<B: HeBackend> {
    pub public: B::PublicKey,
    pub secret: B::SecretKey,
}

/// Single trusted key generation: participants share the secret key, the
/// server gets the public and evaluation keys only.
pub fn distribute_keys<B: HeBackend>(
    backend: &B,
    seed: u64,
) -> (ServerKeys<B>, ParticipantKeys<B>) {
    let KeyMaterial {
        public,
        secret,
        evaluation,
    } = backend.keygen(seeds::seed_u64(seed, Stream::Keys, &[]));
    (
        ServerKeys {
            public: public.clone(),
            evaluation,
        },
        ParticipantKeys { public, secret },
    )
}

/// Outcome of comparing the two neighbour reports of one contribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Accepted(f64),
    Flagged { first: f64, second: f64 },
}

pub fn verify_phi_reports(first: f64, second: f64, tolerance: f64) -> Verdict {
    if (first - second).abs() <= tolerance {
        Verdict::Accepted((first + second) / 2.0)
    } else {
        Verdict::Flagged { first, second }
    }
}

/// The two ring neighbours that evaluate participant `i`'s contribution.
pub fn neighbours(i: usize, n: usize) -> [usize; 2] {
    [(i + n - 1) % n, (i + 1) % n]
}

/// Messages addressed to the server in an encrypted round.
#[derive(Clone, Debug)]
pub enum ToServer<C> {
    Upload {
        from: usize,
        gradient: CiphertextVector<C>,
    },
    PhiReport {
        from: usize,
        subject: usize,
        phi: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InboxEntry {
    Ciphertext {
        from: usize,
        level: usize,
        chunks: usize,
    },
    PhiReport {
        from: usize,
        subject: usize,
    },
}

impl<C> ToServer<C> {
    fn entry(&self) -> InboxEntry {
        match self {
            ToServer::Upload { from, gradient } => InboxEntry::Ciphertext {
                from: *from,
                level: gradient.level(),
                chunks: gradient.chunk_count(),
            },
            ToServer::PhiReport { from, subject, .. } => InboxEntry::PhiReport {
                from: *from,
                subject: *subject,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiReport {
    pub reporter: usize,
    pub subject: usize,
    pub phi: f64,
}

/// Shape of a transported vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PayloadInfo {
    pub length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
}

pub trait Payload {
    fn info(&self) -> PayloadInfo;
}

impl Payload for Vec<f64> {
    fn info(&self) -> PayloadInfo {
        PayloadInfo {
            length: self.len(),
            chunks: None,
            level: None,
        }
    }
}

impl<C> Payload for CiphertextVector<C> {
    fn info(&self) -> PayloadInfo {
        PayloadInfo {
            length: self.logical_length(),
            chunks: Some(self.chunk_count()),
            level: Some(self.level()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalarProducts<G> {
    pub aggregate_norm: G,
    pub local_norms: Vec<G>,
    pub cross: Vec<G>,
}

/// Everything exchanged in one round. Plaintext payloads for FFLX,
/// ciphertexts for GBPPFFL.
#[derive(Clone, Debug)]
pub struct RoundTranscript<G> {
    pub round: usize,
    pub scheme: &'static str,
    pub r_prev: Vec<f64>,
    pub uploads: Vec<G>,
    pub aggregate: G,
    pub scalars: Option<ScalarProducts<G>>,
    pub reports: Vec<PhiReport>,
    pub reputation: ReputationState,
    pub masks: Vec<Mask>,
    pub rewards: Vec<G>,
    pub server_inbox: Vec<InboxEntry>,
}

/// Line-oriented summary of a [`RoundTranscript`]; ciphertext contents are
/// reduced to their shape.
#[derive(Clone, Debug, Serialize)]
pub struct TranscriptRecord {
    pub round: usize,
    pub scheme: &'static str,
    pub r_prev: Vec<f64>,
    pub phi: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub retained: Vec<usize>,
    pub reports: Vec<PhiReport>,
    pub uploads: Vec<PayloadInfo>,
    pub aggregate: PayloadInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalar_products: Option<Vec<PayloadInfo>>,
    pub rewards: Vec<PayloadInfo>,
    pub server_inbox: Vec<InboxEntry>,
}

impl<G: Payload> RoundTranscript<G> {
    pub fn record(&self) -> TranscriptRecord {
        TranscriptRecord {
            round: self.round,
            scheme: self.scheme,
            r_prev: self.r_prev.clone(),
            phi: self.reputation.phi.clone(),
            r: self.reputation.r.clone(),
            q: self.reputation.q.clone(),
            retained: self.masks.iter().map(Mask::retained_count).collect(),
            reports: self.reports.clone(),
            uploads: self.uploads.iter().map(Payload::info).collect(),
            aggregate: self.aggregate.info(),
            scalar_products: self.scalars.as_ref().map(|s| {
                std::iter::once(&s.aggregate_norm)
                    .chain(&s.local_norms)
                    .chain(&s.cross)
                    .map(Payload::info)
                    .collect()
            }),
            rewards: self.rewards.iter().map(Payload::info).collect(),
            server_inbox: self.server_inbox.clone(),
        }
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.record()).expect("transcript records serialize")
    }
}

/// Plain gradient steps on the local set, rescaled to norm `delta`: the
/// reward a participant gets with an empty mask.
pub fn run_round_standalone(
    participants: &mut [Participant],
    delta: f64,
    ctx: &RoundContext,
) -> Result<()> {
    for p in participants.iter_mut() {
        let g = p
            .normalized_gradient(ctx, delta)
            .map_err(|e| e.in_round(ctx.round))?;
        p.step(&g, ctx.learning_rate)?;
    }
    Ok(())
}

/// Uniform-weight mean of the raw local gradients applied to every model.
/// Returns the mean gradient.
pub fn run_round_fedsgd(participants: &mut [Participant], ctx: &RoundContext) -> Result<Vec<f64>> {
    let grads = participants
        .iter()
        .map(|p| p.gradient(ctx))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_round(ctx.round))?;
    let weights = vec![1.0 / grads.len().max(1) as f64; grads.len()];
    let mean = fairness::aggregate(&grads, &weights).map_err(|e| e.in_round(ctx.round))?;
    for p in participants.iter_mut() {
        p.step(&mean, ctx.learning_rate)?;
    }
    Ok(mean)
}

fn mask_order(ctx: &RoundContext, l: usize) -> Vec<usize> {
    fairness::round_permutation(
        l,
        &mut seeds::rng(ctx.seed, Stream::Masks, &[ctx.round as u64]),
    )
}

/// Plaintext reputation round. `strategy` selects top-k masks (the
/// classic scheme) or the shared random order used by the encrypted
/// protocol, in which case the round is a plaintext replay of it.
pub fn run_round_fflx(
    participants: &mut [Participant],
    server: &mut ServerState,
    strategy: MaskStrategy,
    ctx: &RoundContext,
) -> Result<RoundTranscript<Vec<f64>>> {
    fflx(participants, server, strategy, ctx).map_err(|e| e.in_round(ctx.round))
}

fn fflx(
    participants: &mut [Participant],
    server: &mut ServerState,
    strategy: MaskStrategy,
    ctx: &RoundContext,
) -> Result<RoundTranscript<Vec<f64>>> {
    check_participants(participants, &server.reputation)?;
    let delta = server.fairness.delta;
    let uploads = participants
        .iter()
        .map(|p| p.normalized_gradient(ctx, delta))
        .collect::<Result<Vec<_>>>()?;
    let r_prev = server.reputation.r.clone();
    let aggregate = fairness::aggregate(&uploads, &r_prev)?;
    let phi = uploads
        .iter()
        .map(|u| contribution(u, &aggregate))
        .collect::<Result<Vec<_>>>()?;
    server.update(&phi)?;

    let l = aggregate.len();
    let order = (strategy == MaskStrategy::Randomized).then(|| mask_order(ctx, l));
    let source = match &order {
        Some(o) => MaskSource::Randomized(o),
        None => MaskSource::TopK(&aggregate),
    };
    let masks = server
        .reputation
        .q
        .iter()
        .map(|&q| build_mask(q, l, source))
        .collect::<Result<Vec<_>>>()?;
    let rewards = masks
        .iter()
        .zip(&uploads)
        .map(|(m, u)| reward_gradient(m, &aggregate, u))
        .collect::<Result<Vec<_>>>()?;
    for (p, reward) in participants.iter_mut().zip(&rewards) {
        p.step(reward, ctx.learning_rate)?;
    }
    Ok(RoundTranscript {
        round: ctx.round,
        scheme: "fflx",
        r_prev,
        uploads,
        aggregate,
        scalars: None,
        reports: Vec::new(),
        reputation: server.reputation.clone(),
        masks,
        rewards,
        server_inbox: Vec::new(),
    })
}

/// Test hook that rewrites a contribution report `(reporter, subject, phi)`
/// before the server sees it.
pub type ReportTamper<'a> = &'a dyn Fn(usize, usize, f64) -> f64;

/// Encrypted round. Participants upload encrypted normalized gradients;
/// the server forms the encrypted aggregate and the `2N + 1` scalar
/// products, routes each participant's products to its two ring
/// neighbours, accepts the contribution once both reports agree within
/// `ctx.phi_tolerance`, updates reputations in plaintext and returns
/// encrypted rewards assembled under the shared random mask order.
pub fn run_round_gbppffl<B: HeBackend>(
    backend: &B,
    participants: &mut [Participant],
    keys: &ParticipantKeys<B>,
    server: &mut ServerState<ServerKeys<B>>,
    ctx: &RoundContext,
    tamper: Option<ReportTamper<'_>>,
) -> Result<RoundTranscript<CiphertextVector<B::Chunk>>> {
    gbppffl(backend, participants, keys, server, ctx, tamper).map_err(|e| e.in_round(ctx.round))
}

fn gbppffl<B: HeBackend>(
    backend: &B,
    participants: &mut [Participant],
    keys: &ParticipantKeys<B>,
    server: &mut ServerState<ServerKeys<B>>,
    ctx: &RoundContext,
    tamper: Option<ReportTamper<'_>>,
) -> Result<RoundTranscript<CiphertextVector<B::Chunk>>> {
    check_participants(participants, &server.reputation)?;
    let n = participants.len();
    let delta = server.fairness.delta;
    let mut inbox: Vec<ToServer<B::Chunk>> = Vec::with_capacity(3 * n);

    // participants: normalize, encrypt, upload
    for p in participants.iter() {
        let g = p.normalized_gradient(ctx, delta)?;
        let mut rng = seeds::rng(
            ctx.seed,
            Stream::Encryption,
            &[ctx.round as u64, p.id as u64],
        );
        inbox.push(ToServer::Upload {
            from: p.id,
            gradient: backend.encrypt(&keys.public, &g, &mut rng)?,
        });
    }

    // server: encrypted aggregate and scalar products
    let uploads: Vec<CiphertextVector<B::Chunk>> = inbox
        .iter()
        .filter_map(|m| match m {
            ToServer::Upload { gradient, .. } => Some(gradient.clone()),
            ToServer::PhiReport { .. } => None,
        })
        .collect();
    let r_prev = server.reputation.r.clone();
    let ek = &server.keys.evaluation;
    let mut aggregate = backend.pmult(Plaintext::Scalar(r_prev[0]), &uploads[0])?;
    for (c, &r) in uploads.iter().zip(&r_prev).skip(1) {
        aggregate = backend.add(&aggregate, &backend.pmult(Plaintext::Scalar(r), c)?)?;
    }
    let aggregate_norm = backend.dot(ek, &aggregate, &aggregate)?;
    let mut local_norms = Vec::with_capacity(n);
    let mut cross = Vec::with_capacity(n);
    for c in &uploads {
        local_norms.push(backend.dot(ek, c, c)?);
        let dropped = backend.drop_to_level(c, aggregate.level())?;
        cross.push(backend.dot(ek, &dropped, &aggregate)?);
    }

    // neighbours: decrypt subject i's products and report its contribution
    let mut reports = Vec::with_capacity(2 * n);
    for subject in 0..n {
        for reporter in neighbours(subject, n) {
            let decrypt = |c: &CiphertextVector<B::Chunk>| backend.decrypt(&keys.secret, c)[0];
            let mut phi = contribution_from_scalars(
                decrypt(&cross[subject]),
                decrypt(&local_norms[subject]),
                decrypt(&aggregate_norm),
            )?;
            if let Some(t) = tamper {
                phi = t(reporter, subject, phi);
            }
            reports.push(PhiReport {
                reporter,
                subject,
                phi,
            });
            inbox.push(ToServer::PhiReport {
                from: reporter,
                subject,
                phi,
            });
        }
    }

    // server: verify reports, update reputations, assemble rewards
    let mut received: Vec<Vec<f64>> = vec![Vec::with_capacity(2); n];
    for m in &inbox {
        if let ToServer::PhiReport { subject, phi, .. } = m {
            received[*subject].push(*phi);
        }
    }
    let mut phi = Vec::with_capacity(n);
    for (subject, pair) in received.iter().enumerate() {
        match verify_phi_reports(pair[0], pair[1], ctx.phi_tolerance) {
            Verdict::Accepted(v) => phi.push(v),
            Verdict::Flagged { first, second } => {
                return Err(Error::ReportDisagreement {
                    participant: subject,
                    first,
                    second,
                })
            }
        }
    }
    server.update(&phi)?;

    let l = aggregate.logical_length();
    let order = mask_order(ctx, l);
    let masks = server
        .reputation
        .q
        .iter()
        .map(|&q| build_mask(q, l, MaskSource::Randomized(&order)))
        .collect::<Result<Vec<_>>>()?;
    let mut rewards = Vec::with_capacity(n);
    for (mask, c) in masks.iter().zip(&uploads) {
        let kept = backend.pmult(Plaintext::Vector(&mask.indicator()), &aggregate)?;
        let own = backend.pmult(Plaintext::Vector(&mask.complement_indicator()), c)?;
        let own = backend.drop_to_level(&own, kept.level())?;
        rewards.push(backend.add(&kept, &own)?);
    }

    // participants: decrypt and apply their rewards
    for (p, reward) in participants.iter_mut().zip(&rewards) {
        let update = backend.decrypt(&keys.secret, reward);
        p.step(&update, ctx.learning_rate)?;
    }

    Ok(RoundTranscript {
        round: ctx.round,
        scheme: "gbppffl",
        r_prev,
        uploads,
        aggregate,
        scalars: Some(ScalarProducts {
            aggregate_norm,
            local_norms,
            cross,
        }),
        reports,
        reputation: server.reputation.clone(),
        masks,
        rewards,
        server_inbox: inbox.iter().map(ToServer::entry).collect(),
    })
}

fn check_participants(participants: &[Participant], reputation: &ReputationState) -> Result<()> {
    if participants.is_empty() {
        return Err(Error::NoParticipants);
    }
    if participants.len() != reputation.participants() {
        return Err(Error::DimensionMismatch {
            expected: reputation.participants(),
            found: participants.len(),
        });
    }
    if let Some((i, p)) = participants.iter().enumerate().find(|(i, p)| p.id != *i) {
        return Err(Error::InvalidConfig(format!(
            "participant at position {i} has id {}",
            p.id
        )));
    }
    Ok(())
}
