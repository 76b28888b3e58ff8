from .losses import normalize_rewards, transition_logprob, transition_logprob_grad_mu, policy_terms
from .chains import ChainSample, sample_chains
from .finetune import FinetuneConfig, finetune, chain_loss_and_grads

__all__ = [
    "normalize_rewards",
    "transition_logprob",
    "transition_logprob_grad_mu",
    "policy_terms",
    "ChainSample",
    "sample_chains",
    "FinetuneConfig",
    "finetune",
    "chain_loss_and_grads",
]
