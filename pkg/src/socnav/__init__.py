"""Social navigation lab: simulator, differentiable objective, online fine-tuning."""

__version__ = "0.1.0"
