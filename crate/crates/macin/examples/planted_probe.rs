use macin::corpus::{build_article_matrix, embed_sentence, tokenize};
use macin::extractor::{rank_top_k, score_sentences};
use macin::model::{ModelConfig, Variant};
use macin::synth::{generate, SynthConfig};
use macin::trainer::{cross_validate, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let beta1: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.99);
    let beta2: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let dropout: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let filters: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(64);

    let dim: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(8);
    let heads: usize = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(2);
    let distractors: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(3);
    let synth_cfg = SynthConfig { embed_dim: dim, distractors_per_article: distractors, ..SynthConfig::default() };
    let corpus = generate(&synth_cfg);
    let model_cfg = ModelConfig {
        embed_dim: dim,
        max_sentences: synth_cfg.sentences_per_article,
        conv_width: args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1),
        filters,
        heads,
        vocab_total: 0,
        max_headline_words: 4,
        variant: Variant::Combined,
        dropout,
        decoder_hidden: 16,
        decoder_embed: 8,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: lr,
        beta1,
        beta2,
        seed: 13,
        ..TrainConfig::default()
    };

    let start = std::time::Instant::now();
    let folds = cross_validate(&corpus.articles, &corpus.table, 5, &model_cfg, &train_cfg).unwrap();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut train_hits = 0usize;
    let mut train_total = 0usize;
    for fold in &folds {
        for article in &corpus.articles {
            let aid = article.id;
            let matrix = build_article_matrix(article, &corpus.table, model_cfg.max_sentences).unwrap();
            let headline = embed_sentence(&tokenize(&article.headline), &corpus.table);
            let scores = score_sentences(&fold.state, &matrix, &headline).unwrap();
            let ranking = rank_top_k(aid, &scores, 1);
            let hit = ranking.ranked[0].sentence_id == corpus.planted[aid as usize];
            if fold.val_ids.contains(&aid) {
                total += 1;
                if hit { hits += 1; }
            } else {
                train_total += 1;
                if hit { train_hits += 1; }
            }
        }
    }
    let lam: f64 = folds.iter().map(|f| (0..heads).map(|h| f.state.param(&format!("cross.{h}.context_scale")).data()[0].abs()).sum::<f64>() / heads as f64).sum::<f64>() / folds.len() as f64;
    let lams: f64 = folds.iter().map(|f| (0..heads).map(|h| f.state.param(&format!("self.{h}.context_scale")).data()[0].abs()).sum::<f64>() / heads as f64).sum::<f64>() / folds.len() as f64;
    let first = folds[0].log.epochs.first().unwrap().train_total;
    let last = folds[0].log.epochs.last().unwrap().train_total;
    let last_lv = folds[0].log.epochs.last().unwrap().train_vector.unwrap_or(0.0);
    let last_lw = folds[0].log.epochs.last().unwrap().train_words.unwrap_or(0.0);
    println!(
        "epochs={epochs} lr={lr} b1={beta1} b2={beta2} drop={dropout} C={filters} K={} D={dim} M={heads} X={distractors} | top1 val {hits}/{total} train {train_hits}/{train_total} | lam_c {lam:.4} lam_s {lams:.4} | fold0 loss {first:.4} -> {last:.4} (lv {last_lv:.4} lw {last_lw:.4}) | {:.1}s",
        model_cfg.conv_width,
        start.elapsed().as_secs_f64()
    );
}
