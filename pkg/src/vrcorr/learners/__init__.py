from .esn import EsnLearner, EsnTransfer, EsnPlain
from .q_learning import QLearner, QCorrelated, QUncorrelated
