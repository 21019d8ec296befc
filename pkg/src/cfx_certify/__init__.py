"""Certified counterfactual explanations for ReLU networks under bounded parameter shifts."""
