use super::*;
use crate::corpus::{build_vocab, encode_corpus, gen_synthetic_corpus, SynthConfig};
use crate::pairs::{CrossPair, IntraPair};
use rand::Rng;

fn tiny() -> (Vocab, Vec<UnitInputs>) {
    let cfg = SynthConfig {
        n_docs: 6,
        min_sentences: 3,
        max_sentences: 3,
        n_plain: 6,
        n_ambiguous: 2,
        senses: 2,
        ..SynthConfig::default()
    };
    let corpus = gen_synthetic_corpus(&cfg, 3).unwrap();
    let vocab = build_vocab(&corpus.docs, 512).unwrap();
    let docs = encode_corpus(&corpus.docs, &vocab).unwrap();
    let units = unit_inputs(&docs, &vocab, 32).unwrap();
    (vocab, units)
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        embed_dim: 6,
        hidden_dim: 8,
        batch_size: 4,
        cpl_batch_size: 4,
        max_len: 10,
        ..TrainConfig::default()
    }
}

fn random_ids(rng: &mut ChaCha8Rng, v: usize, n: usize) -> Vec<TokenId> {
    let mut y: Vec<TokenId> = (0..n).map(|_| rng.random_range(5..v as TokenId)).collect();
    y.push(EOS);
    y
}

fn random_pairs(units: &[UnitInputs], v: usize, seed: u64) -> PreparedPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PreparedPairs::default();
    for (i, g) in [PairGroup::IntraS, PairGroup::IntraS, PairGroup::IntraC, PairGroup::CrossPlus, PairGroup::CrossMinus, PairGroup::CrossMinus]
        .into_iter()
        .enumerate()
    {
        let u = &units[(i * 5 + 1) % units.len()];
        let (pk, mk) = match g {
            PairGroup::IntraS => (ConditionKind::SentOnly, ConditionKind::SentOnly),
            PairGroup::IntraC => (ConditionKind::WithContext, ConditionKind::WithContext),
            _ if i % 2 == 0 => (ConditionKind::SentOnly, ConditionKind::WithContext),
            _ => (ConditionKind::WithContext, ConditionKind::SentOnly),
        };
        let (a, b) = (rng.random_range(1..4), rng.random_range(1..4));
        out.group_mut(g).push(PreparedPair {
            group: g,
            plus_cond: u.condition(pk).clone(),
            y_plus: random_ids(&mut rng, v, a),
            minus_cond: u.condition(mk).clone(),
            y_minus: random_ids(&mut rng, v, b),
        });
    }
    out
}

/// The minibatch loss recomputed from scratch through the scalar kernels.
fn scratch_loss(params: &PolicyParams, batch: &[&PreparedPair], spec: ObjectiveSpec) -> f64 {
    let mut by_group: HashMap<PairGroup, Vec<PrefLogProbs>> = HashMap::new();
    for p in batch {
        let lp = |c: &Condition, y: &[TokenId]| {
            let raw = policy::log_prob(params, c, y).unwrap();
            if spec.length_norm {
                raw / y.len() as f64
            } else {
                raw
            }
        };
        let x = PrefLogProbs {
            lp_plus: lp(&p.plus_cond, &p.y_plus),
            lp_minus: lp(&p.minus_cond, &p.y_minus),
            beta: spec.beta,
        };
        by_group.entry(p.group).or_default().push(x);
    }
    let get = |g| by_group.get(&g).cloned().unwrap_or_default();
    let intra = crate::objective::intra_loss(&get(PairGroup::IntraS), &get(PairGroup::IntraC)).unwrap();
    let cross = crate::objective::cross_loss(&get(PairGroup::CrossPlus), &get(PairGroup::CrossMinus)).unwrap();
    spec.intra_weight * intra + spec.cross_weight * cross
}

#[test]
fn minibatch_gradient_matches_finite_differences() {
    let (vocab, units) = tiny();
    for (seed, length_norm) in [(1u64, false), (2, true), (3, false)] {
        let params = PolicyParams::init(vocab.len(), 5, 6, seed);
        let pairs = random_pairs(&units, vocab.len(), seed);
        let batch: Vec<&PreparedPair> = pairs.iter().collect();
        let spec = ObjectiveSpec {
            beta: 0.7,
            intra_weight: 1.0,
            cross_weight: if seed == 3 { 0.5 } else { 1.0 },
            length_norm,
        };
        let obj = minibatch_objective(&params, &batch, spec).unwrap();
        assert!((obj.cpl - scratch_loss(&params, &batch, spec)).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for _ in 0..40 {
            let i = rng.random_range(0..params.num_params());
            let h = 1e-5;
            let mut p = params.clone();
            p.set(i, params.get(i) + h);
            let up = scratch_loss(&p, &batch, spec);
            p.set(i, params.get(i) - h);
            let down = scratch_loss(&p, &batch, spec);
            let fd = (up - down) / (2.0 * h);
            let an = obj.grad.get(i);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            assert!(rel < 1e-4, "coord {i} ({}): fd {fd} analytic {an}", params.tensor_of(i));
        }
    }
}

#[test]
fn cpl_gradient_is_sum_of_component_gradients() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 5, 6, 9);
    let pairs = random_pairs(&units, vocab.len(), 9);
    let spec = ObjectiveSpec {
        beta: 0.1,
        intra_weight: 1.0,
        cross_weight: 1.0,
        length_norm: false,
    };
    let all: Vec<&PreparedPair> = pairs.iter().collect();
    let intra: Vec<&PreparedPair> = all.iter().copied().filter(|p| !p.group.is_cross()).collect();
    let cross: Vec<&PreparedPair> = all.iter().copied().filter(|p| p.group.is_cross()).collect();
    let full = minibatch_objective(&params, &all, spec).unwrap();
    let mut sum = minibatch_objective(&params, &intra, spec).unwrap().grad;
    sum.add_scaled(&minibatch_objective(&params, &cross, spec).unwrap().grad, 1.0);
    for i in 0..params.num_params() {
        assert!((full.grad.get(i) - sum.get(i)).abs() < 1e-12);
    }
}

#[test]
fn saturated_pair_keeps_likelihood_pull() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 5, 6, 4);
    let u = &units[0];
    let pair = PreparedPair {
        group: PairGroup::IntraS,
        plus_cond: u.sent.clone(),
        y_plus: u.target.clone(),
        minus_cond: u.sent.clone(),
        y_minus: u.target.clone(),
    };
    // A long dispreferred output and a huge beta saturate the contrastive term.
    let mut other = pair.clone();
    other.y_minus = [vec![5; 40], vec![EOS]].concat();
    let lp_plus = policy::log_prob(&params, &other.plus_cond, &other.y_plus).unwrap();
    let lp_minus = policy::log_prob(&params, &other.minus_cond, &other.y_minus).unwrap();
    assert!(lp_plus > lp_minus);
    let spec = ObjectiveSpec {
        beta: 1e4,
        intra_weight: 1.0,
        cross_weight: 1.0,
        length_norm: false,
    };
    let obj = minibatch_objective(&params, &[&other], spec).unwrap();
    let (_, g_plus) = policy::grad_log_prob(&params, &other.plus_cond, &other.y_plus).unwrap();
    for i in 0..params.num_params() {
        assert!((obj.grad.get(i) + g_plus.get(i)).abs() < 1e-9);
    }
}

#[test]
fn cross_pairs_bind_each_member_to_its_own_condition() {
    let (vocab, units) = tiny();
    let u = units.iter().find(|u| u.key.index > 0).unwrap();
    let words: Vec<&str> = u.reference_text.split(' ').collect();
    let corpus = PairCorpus {
        intra_s: vec![IntraPair {
            unit_key: u.key.clone(),
            condition: ConditionKind::SentOnly,
            preferred: u.reference_text.clone(),
            dispreferred: words[0].to_string(),
            score_plus: QualityScore::new(1.0).unwrap(),
            score_minus: QualityScore::new(0.1).unwrap(),
        }],
        cross: vec![CrossPair {
            unit_key: u.key.clone(),
            winner_condition: ConditionKind::WithContext,
            y_w_plus: u.reference_text.clone(),
            rival: words[1].to_string(),
            rival_rank: RivalRank::Minus,
            winner_score: QualityScore::new(1.0).unwrap(),
            rival_score: QualityScore::new(0.2).unwrap(),
        }],
        ..PairCorpus::default()
    };
    let prepared = prepare_pairs(&corpus, &units, &vocab).unwrap();
    assert_eq!(prepared.sizes(), [1, 0, 0, 1]);
    let c = &prepared.cross_minus[0];
    assert_eq!(c.plus_cond.kind(), ConditionKind::WithContext);
    assert_eq!(c.plus_cond.context(), u.ctx.context());
    assert_eq!(c.minus_cond.kind(), ConditionKind::SentOnly);
    assert!(c.minus_cond.context().is_empty());
    assert_eq!(c.y_plus, u.target);
    assert_eq!(prepared.intra_s[0].plus_cond, u.sent);

    let mut bad = corpus.clone();
    bad.cross[0].unit_key.doc_id = "missing".into();
    assert!(prepare_pairs(&bad, &units, &vocab).is_err());
}

#[test]
fn zero_epochs_leave_params_unchanged() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 1);
    let cfg = TrainConfig {
        sft_epochs: 0,
        ..small_cfg()
    };
    let (out, report) = sft(&params, &units, &cfg).unwrap();
    assert_eq!(out, params);
    assert!(report.steps.is_empty());
}

#[test]
fn memorizes_a_single_sentence() {
    let (vocab, units) = tiny();
    let one = vec![units[1].clone()];
    let params = PolicyParams::init(vocab.len(), 6, 8, 2);
    let cfg = TrainConfig {
        sft_epochs: 300,
        learning_rate: 0.1,
        ..small_cfg()
    };
    let (out, report) = sft(&params, &one, &cfg).unwrap();
    assert_eq!(report.steps.len(), 300);
    let per_token = -policy::log_prob(&out, &one[0].sent, &one[0].target).unwrap() / one[0].target.len() as f64;
    assert!(per_token < 0.05, "per-token nll {per_token}");
    assert_eq!(policy::greedy(&out, &one[0].ctx, 20).unwrap(), one[0].target);
}

#[test]
fn likelihood_training_is_deterministic() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 5);
    let cfg = TrainConfig {
        sft_epochs: 2,
        ..small_cfg()
    };
    let (a, ra) = sft(&params, &units, &cfg).unwrap();
    let (b, rb) = sft(&params, &units, &cfg).unwrap();
    assert_eq!(crate::policy::write_checkpoint(&a), crate::policy::write_checkpoint(&b));
    assert_eq!(ra.to_csv(), rb.to_csv());
    assert_eq!(ra.steps.len(), 2 * units.len().div_ceil(4));
    assert!(ra.epoch_means[1] < ra.epoch_means[0]);
}

#[test]
fn rejects_empty_inputs() {
    let (vocab, _) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 5);
    assert!(matches!(sft(&params, &[], &small_cfg()), Err(Error::Usage(_))));
    assert!(matches!(
        train_cpl(&params, &PreparedPairs::default(), &small_cfg()),
        Err(Error::Usage(_))
    ));
}

#[test]
fn candidate_sets_have_two_draws_per_condition() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 6);
    let cfg = small_cfg();
    let sets = generate_candidates(&params, &units, &vocab, &cfg, 11).unwrap();
    assert_eq!(sets.len(), units.len());
    for (set, u) in sets.iter().zip(&units) {
        assert_eq!(set.unit_key(), &u.key);
        assert!(set.is_scored());
        let n_s = set.candidates().iter().filter(|c| c.condition == ConditionKind::SentOnly).count();
        assert_eq!(n_s, 2);
    }
    assert_eq!(sets, generate_candidates(&params, &units, &vocab, &cfg, 11).unwrap());
    assert_ne!(sets, generate_candidates(&params, &units, &vocab, &cfg, 12).unwrap());

    // Zero context budget: both arms share one distribution but draw separately.
    let docs: Vec<Document> = {
        let mut by_doc: Vec<Document> = Vec::new();
        for u in &units {
            if by_doc.last().is_none_or(|d| d.doc_id != u.key.doc_id) {
                by_doc.push(Document {
                    doc_id: u.key.doc_id.clone(),
                    units: Vec::new(),
                });
            }
            by_doc.last_mut().unwrap().units.push(crate::corpus::SentenceUnit {
                doc_id: u.key.doc_id.clone(),
                index: u.key.index,
                source: u.sent.source().to_vec(),
                reference: u.target[..u.target.len() - 1].to_vec(),
            });
        }
        by_doc
    };
    let flat = unit_inputs(&docs, &vocab, 0).unwrap();
    assert!(flat.iter().all(|u| u.ctx == u.sent));
    let sets = generate_candidates(&params, &flat, &vocab, &cfg, 11).unwrap();
    let differs = sets.iter().any(|s| s.candidates()[0].text != s.candidates()[2].text);
    assert!(differs);
}

#[test]
fn rescoring_switches_the_labeling_metric() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 6);
    let sets = generate_candidates(&params, &units[..3], &vocab, &small_cfg(), 1).unwrap();
    let bleu = rescore(&sets, MetricKind::BleuProxy).unwrap();
    for (a, b) in sets.iter().zip(&bleu) {
        for (x, y) in a.candidates().iter().zip(b.candidates()) {
            assert_eq!(y.score, Some(x.card.unwrap().bleu));
            assert_eq!(x.text, y.text);
        }
    }
}

fn reference_pairs(units: &[UnitInputs], v: usize) -> PreparedPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut out = PreparedPairs::default();
    for (i, u) in units.iter().enumerate() {
        let g = PairGroup::ALL[i % 4];
        let (pk, mk) = match g {
            PairGroup::IntraS => (ConditionKind::SentOnly, ConditionKind::SentOnly),
            PairGroup::IntraC => (ConditionKind::WithContext, ConditionKind::WithContext),
            PairGroup::CrossPlus => (ConditionKind::WithContext, ConditionKind::SentOnly),
            PairGroup::CrossMinus => (ConditionKind::SentOnly, ConditionKind::WithContext),
        };
        let mut y_minus = u.target.clone();
        let at = rng.random_range(0..y_minus.len() - 1);
        y_minus[at] = rng.random_range(5..v as TokenId);
        out.group_mut(g).push(PreparedPair {
            group: g,
            plus_cond: u.condition(pk).clone(),
            y_plus: u.target.clone(),
            minus_cond: u.condition(mk).clone(),
            y_minus,
        });
    }
    out
}

#[test]
fn preference_training_improves_ranking() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 8);
    let pairs = reference_pairs(&units, vocab.len());
    let cfg = TrainConfig {
        cpl_epochs: 4,
        cpl_learning_rate: 0.05,
        ..small_cfg()
    };
    let before = ranking_accuracy(&params, &pairs).unwrap();
    let (out, report) = train_cpl(&params, &pairs, &cfg).unwrap();
    let after = ranking_accuracy(&out, &pairs).unwrap();
    assert!(after > before, "{before} -> {after}");
    assert_eq!(report.pair_sizes, Some(pairs.sizes()));
    assert_eq!(report.to_csv().lines().count(), report.steps.len() + 1);
    assert!(report.to_csv().starts_with("step,intra,cross,cpl,mean_margin_s,mean_margin_c,mean_margin_cr\n"));
}

#[test]
fn intra_only_matches_training_without_cross_pairs() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 8);
    let pairs = reference_pairs(&units, vocab.len());
    let cfg = TrainConfig {
        objective: ObjectiveMode::IntraOnly,
        ..small_cfg()
    };
    let (a, ra) = train_cpl(&params, &pairs, &cfg).unwrap();
    let mut stripped = pairs.clone();
    stripped.cross_plus.clear();
    stripped.cross_minus.clear();
    let (b, rb) = train_cpl(&params, &stripped, &TrainConfig { objective: ObjectiveMode::Cpl, ..cfg }).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.steps, rb.steps);
    assert_eq!(ra.pair_sizes, rb.pair_sizes);
    assert!(ra.steps.iter().all(|s| s.cross == Some(0.0) && s.mean_margin_cr.is_none()));
}

#[test]
fn batches_interleave_groups_proportionally() {
    let (vocab, units) = tiny();
    let pairs = reference_pairs(&units, vocab.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batches = epoch_batches(&pairs, 4, &mut rng);
    assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), pairs.len());
    for b in &batches {
        assert!(b.len() <= 5);
        for g in PairGroup::ALL {
            assert!(b.iter().any(|p| p.group == g) || pairs.group(g).len() < batches.len());
        }
    }
}

#[test]
fn optimizer_update_rules() {
    let mut p = PolicyParams::zeros(6, 2, 2);
    let mut g = p.zeros_like();
    g.b_out[0] = 3.0;
    g.b_out[1] = 4.0;
    let mut sgd = Sgd::new(0.1, Optimizer::Sgd, 1.0);
    assert_eq!(sgd.step(&mut p, &mut g.clone()), 5.0);
    assert!((p.b_out[0] + 0.06).abs() < 1e-15);
    assert!((p.b_out[1] + 0.08).abs() < 1e-15);

    let mut p = PolicyParams::zeros(6, 2, 2);
    let mut m = Sgd::new(1.0, Optimizer::Momentum(0.5), 0.0);
    m.step(&mut p, &mut g.clone());
    m.step(&mut p, &mut g);
    // v1 = g, v2 = 0.5 g + g
    assert!((p.b_out[0] + 3.0 * 2.5).abs() < 1e-12);
}

#[test]
fn divergence_reports_last_good_params() {
    let (vocab, units) = tiny();
    let params = PolicyParams::init(vocab.len(), 6, 8, 1);
    let cfg = TrainConfig {
        sft_epochs: 5,
        learning_rate: 1e200,
        grad_clip: 0.0,
        optimizer: Optimizer::Sgd,
        ..small_cfg()
    };
    match sft(&params, &units, &cfg) {
        Err(Error::Diverged { step, last_good, .. }) => {
            assert!(step >= 1);
            assert!(last_good.is_finite());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
