from .classifier import (
    PrefixClassifier,
    PrefixState,
    begin_prefix,
    classifier_prob,
    extend_prefix,
    state_posterior,
    train_prefix_classifier,
)
from .ngram import (
    NGramLM,
    flatten_example,
    flatten_history,
    lm_context,
    lm_next_distribution,
    perplexity,
    train_ngram_lm,
)
