"""Traditional two-network seq2seq and memoryless single-network recurrent forecasters."""
from .nn import MlModel, Seq2SeqModel, RnnCellParams, PredictorParams

__version__ = "0.1.0"
__all__ = ["MlModel", "Seq2SeqModel", "RnnCellParams", "PredictorParams"]
