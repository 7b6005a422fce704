"""Nash equilibria of zero-sum polymatrix Markov games with switching control."""

from pmg.best_response import GapReport, best_response, gap_report, induce_mdp
from pmg.certificate import CertificateReport, optimum_implies_ne, pne_check
from pmg.counterexamples import build_example, verify_no_collapse
from pmg.game import Discounted, Finite, MarkovGame, StateInteraction, validate
from pmg.policy import CorrelatedPolicy, ProductPolicy, marginalize
from pmg.solver import collapse_cce, collapse_two_player, solve_discounted, solve_finite
from pmg.io import load_game, load_policy
from pmg.valuation import ValueTable, evaluate, evaluate_discounted, evaluate_finite

__all__ = [
    "CertificateReport",
    "CorrelatedPolicy",
    "Discounted",
    "Finite",
    "GapReport",
    "MarkovGame",
    "ProductPolicy",
    "StateInteraction",
    "ValueTable",
    "best_response",
    "build_example",
    "collapse_cce",
    "collapse_two_player",
    "evaluate",
    "evaluate_discounted",
    "evaluate_finite",
    "gap_report",
    "induce_mdp",
    "load_game",
    "load_policy",
    "marginalize",
    "optimum_implies_ne",
    "pne_check",
    "solve_discounted",
    "solve_finite",
    "validate",
    "verify_no_collapse",
]
