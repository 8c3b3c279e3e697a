# Copyright 2026 The sigverify Authors
# SPDX-License-Identifier: Apache-2.0
"""Writer-independent offline signature verification."""

from ._core import (  # noqa: F401
    Backbone,
    Cleaner,
    DegenerateEmbedding,
    IoError,
    LoadError,
    SigverifyError,
    ValidationError,
    __version__,
    build_manifest,
    compute_eer,
    compute_roc,
    cosine_similarity,
    default_raters,
    generate_pairs,
    load_signature,
    majority_vote,
    manifest_users,
    psnr,
    read_pairs,
    roc_auc,
    split_verification_users,
)
