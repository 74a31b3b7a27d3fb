use macin::corpus::{build_article_matrix, embed_sentence, tokenize};
use macin::model::{forward, ModelConfig, Variant};
use macin::synth::{generate, SynthConfig};
use macin::trainer::{cross_validate, TrainConfig};
use ndtensor::Mode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let synth_cfg = SynthConfig::default();
    let corpus = generate(&synth_cfg);
    let model_cfg = ModelConfig {
        embed_dim: synth_cfg.embed_dim,
        max_sentences: synth_cfg.sentences_per_article,
        conv_width: 1,
        filters: 64,
        heads: 2,
        vocab_total: 0,
        max_headline_words: 6,
        variant: Variant::Combined,
        dropout: 0.2,
        decoder_hidden: 16,
        decoder_embed: 8,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 500,
        batch_size: 8,
        learning_rate: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        seed: 13,
        ..TrainConfig::default()
    };
    let folds = cross_validate(&corpus.articles, &corpus.table, 5, &model_cfg, &train_cfg).unwrap();
    let mut head_hits = vec![0usize; model_cfg.heads];
    let mut mean_hits = 0usize;
    let mut planted_mass = 0.0f64;
    let mut total = 0usize;
    for fold in &folds {
        for &aid in &fold.val_ids {
            let article = &corpus.articles[aid as usize];
            let matrix = build_article_matrix(article, &corpus.table, model_cfg.max_sentences).unwrap();
            let headline = embed_sentence(&tokenize(&article.headline), &corpus.table);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (out, _) = forward(&fold.state, &matrix, &headline, None, Mode::Eval, &mut rng).unwrap();
            let planted = corpus.planted[aid as usize];
            total += 1;
            let n = matrix.n_real;
            let mut mean = vec![0.0; n];
            for (h, alpha) in out.cross_attention.iter().enumerate() {
                let arg = (0..n).max_by(|&a, &b| alpha[a].partial_cmp(&alpha[b]).unwrap()).unwrap();
                if arg == planted { head_hits[h] += 1; }
                for j in 0..n { mean[j] += alpha[j] / out.cross_attention.len() as f64; }
            }
            let arg = (0..n).max_by(|&a, &b| mean[a].partial_cmp(&mean[b]).unwrap()).unwrap();
            if arg == planted { mean_hits += 1; }
            planted_mass += mean[planted];
        }
    }
    println!("VAL recovery: mean-alpha {mean_hits}/{total}, per-head {head_hits:?}, mean planted mass {:.3}", planted_mass / total as f64);
    let fold = &folds[0];

    println!("fold0 val ids: {:?}", fold.val_ids);
    for (tag, ids) in [("VAL", fold.val_ids.clone()), ("TRAIN", vec![0, 1, 2].into_iter().filter(|i| !fold.val_ids.contains(i)).collect())] {
        for &aid in ids.iter().take(3) {
            let article = &corpus.articles[aid as usize];
            let matrix = build_article_matrix(article, &corpus.table, model_cfg.max_sentences).unwrap();
            let headline = embed_sentence(&tokenize(&article.headline), &corpus.table);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (out, _) = forward(&fold.state, &matrix, &headline, None, Mode::Eval, &mut rng).unwrap();
            let planted = corpus.planted[aid as usize];
            println!("\n{tag} article {aid} planted at {planted}  headline: {}", article.headline);
            for (h, alpha) in out.cross_attention.iter().enumerate() {
                let row: Vec<String> = alpha.iter().map(|v| format!("{v:.3}")).collect();
                println!("  head{h} alpha: [{}]", row.join(" "));
            }
            println!("  sentences: {:?}", article.sentences.iter().map(|s| s.split_whitespace().next().unwrap_or("")).collect::<Vec<_>>());
        }
    }
    // lambda values
    for h in 0..2 {
        println!("cross.{h}: gamma={:.4} lambda={:.4}", fold.state.param(&format!("cross.{h}.input_scale")).data()[0], fold.state.param(&format!("cross.{h}.context_scale")).data()[0]);
        println!("self.{h}:  gamma={:.4} lambda={:.4}", fold.state.param(&format!("self.{h}.input_scale")).data()[0], fold.state.param(&format!("self.{h}.context_scale")).data()[0]);
    }
}
