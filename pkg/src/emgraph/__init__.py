"""EM training of graph neural networks over a distribution of parametrized
graphs: MCMC estimation of a Gibbs posterior over a latent graph parameter,
importance-weighted gradient descent on a latent-dependent GCN, and
expectation-based inference."""

__version__ = "0.1.0"
