"""Sylheti <-> Modern Bangla neural machine translation built on numpy.

Three recurrent models (LSTM transducer, Bi-LSTM + attention transducer,
encoder-decoder Seq2Seq) with hand-written backward passes.
"""

__version__ = "0.1.0"

PAD, UNK, BOS, EOS = 0, 1, 2, 3
