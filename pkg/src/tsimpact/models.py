"""Built-in probabilistic classifiers and the external-model client.

The built-ins are deliberately small, smooth stand-ins: inverse-distance
weighting keeps every class probability continuous in the input, which a
perturbation-based explainer needs (a hard-voting step function probes as
locally constant almost everywhere). ``ExternalModelClient`` speaks a
line-delimited JSON protocol to any process or socket that implements it:

    handshake (server -> client):  {"classes": ["a", "b"]}
    request   (client -> server):  {"id": 1, "series": [[...], ...]}
    response  (server -> client):  {"id": 1, "probs": [[...], ...]}

one message per line, ids echoed back, unknown fields ignored.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import threading
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import dsp
from .core import LabeledDataset
from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    ProcessExit,
    ProtocolViolation,
    Timeout,
)

#: Added to distances before inversion so exact matches don't divide by 0.
DISTANCE_EPS = 1e-9

#: Probability rows must sum to 1 within this tolerance.
ROW_SUM_TOL = 1e-9


def _inverse_distance_proba(
    distances: np.ndarray, labels: Sequence[str], classes: Sequence[str]
) -> np.ndarray:
    """Normalized inverse-distance weights aggregated per class."""
    weights = 1.0 / (distances + DISTANCE_EPS)
    weights /= weights.sum()
    out = np.zeros(len(classes))
    index = {c: i for i, c in enumerate(classes)}
    for w, label in zip(weights, labels):
        out[index[label]] += w
    return out


class KnnTimeSeriesClassifier(BaseEstimator, ClassifierMixin):
    """k-nearest-neighbor classifier on whole-series Euclidean distance.

    Probabilities are inverse-distance weighted over the k nearest
    training series (weights ``1/(dist + 1e-9)``, normalized); distance
    ties are broken by training index order.

    Parameters
    ----------
    k : int
        Number of neighbors, ``1 <= k <= n_train``.
    """

    def __init__(self, k: int = 1):
        self.k = k

    def fit(self, X, y) -> "KnnTimeSeriesClassifier":
        X, y = check_X_y(X, np.asarray(y, dtype=object), dtype=float)
        if X.shape[0] < 1:
            raise EmptyTrainingSet("no training series")
        if not 1 <= self.k <= X.shape[0]:
            raise DimensionMismatch(
                f"k={self.k} outside [1, {X.shape[0]}]"
            )
        self.train_X_ = X
        self.train_y_ = tuple(str(label) for label in y)
        self.classes_ = np.asarray(sorted(set(self.train_y_)), dtype=object)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "train_X_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.train_X_.shape[1]:
            raise DimensionMismatch(
                f"series length {X.shape[1]} != training length "
                f"{self.train_X_.shape[1]}"
            )
        classes = tuple(self.classes_)
        out = np.empty((X.shape[0], len(classes)))
        for i, x in enumerate(X):
            dist = np.sqrt(((self.train_X_ - x) ** 2).sum(axis=1))
            order = np.argsort(dist, kind="stable")[: self.k]
            out[i] = _inverse_distance_proba(
                dist[order], [self.train_y_[j] for j in order], classes
            )
        return out

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class SpectrumCentroidClassifier(BaseEstimator, ClassifierMixin):
    """Nearest-centroid classifier on magnitude spectra.

    Features are ``|RDFT(x)|``, so the model is insensitive to time
    shifts of periodic content by construction; probabilities are
    inverse-distance weighted over the class centroids.
    """

    def fit(self, X, y) -> "SpectrumCentroidClassifier":
        X, y = check_X_y(X, np.asarray(y, dtype=object), dtype=float)
        if X.shape[0] < 1:
            raise EmptyTrainingSet("no training series")
        labels = tuple(str(label) for label in y)
        self.classes_ = np.asarray(sorted(set(labels)), dtype=object)
        mags = np.stack(
            [np.abs(dsp.rdft(row, fast=True).bins) for row in X]
        )
        self.centroids_ = np.stack([
            mags[np.asarray(labels, dtype=object) == c].mean(axis=0)
            for c in self.classes_
        ])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "centroids_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"series length {X.shape[1]} != training length "
                f"{self.n_features_in_}"
            )
        classes = tuple(self.classes_)
        out = np.empty((X.shape[0], len(classes)))
        for i, x in enumerate(X):
            mag = np.abs(dsp.rdft(x, fast=True).bins)
            dist = np.sqrt(((self.centroids_ - mag) ** 2).sum(axis=1))
            out[i] = _inverse_distance_proba(dist, classes, classes)
        return out

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


def knn_model(train: LabeledDataset, k: int = 1) -> KnnTimeSeriesClassifier:
    """Fit the built-in knn classifier from a labeled dataset."""
    if train.labels is None:
        raise EmptyTrainingSet("knn_model needs labeled training data")
    return KnnTimeSeriesClassifier(k=k).fit(train.series, train.labels)


def spectrum_centroid_model(train: LabeledDataset) -> SpectrumCentroidClassifier:
    """Fit the built-in spectrum-centroid classifier."""
    if train.labels is None:
        raise EmptyTrainingSet(
            "spectrum_centroid_model needs labeled training data"
        )
    return SpectrumCentroidClassifier().fit(train.series, train.labels)


def validate_probability_rows(probs: np.ndarray, n_rows: int, n_classes: int) -> np.ndarray:
    """Check the ProbabilisticModel output contract; raise on violation."""
    arr = np.asarray(probs, dtype=float)
    if arr.shape != (n_rows, n_classes):
        raise ProtocolViolation(
            f"expected {n_rows}x{n_classes} probabilities, got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ProtocolViolation("non-finite probability")
    if np.any(arr < -ROW_SUM_TOL) or np.any(arr > 1 + ROW_SUM_TOL):
        raise ProtocolViolation("probability outside [0, 1]")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise ProtocolViolation(
            f"probability row {bad[0]} sums to {sums[bad[0]]!r}, not 1"
        )
    return arr


class _PipeChannel:
    """Line framing over a child process's stdio (binary, select-based)."""

    def __init__(self, proc: subprocess.Popen):
        self._proc = proc
        self._buf = b""

    def send_line(self, line: bytes) -> None:
        if self._proc.poll() is not None:
            raise ProcessExit("external model process has exited")
        try:
            self._proc.stdin.write(line + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProcessExit("external model closed its input") from exc

    def recv_line(self, timeout: float) -> bytes:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            ready, _, _ = select.select([fd], [], [], timeout)
            if not ready:
                raise Timeout(f"no response within {timeout:.0f}s")
            chunk = os.read(fd, 65536)
            if chunk == b"":
                raise ProcessExit("external model process ended mid-protocol")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class _SocketChannel:
    """Line framing over a TCP connection."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = b""

    def send_line(self, line: bytes) -> None:
        try:
            self._sock.sendall(line + b"\n")
        except OSError as exc:
            raise ProcessExit("external model connection closed") from exc

    def recv_line(self, timeout: float) -> bytes:
        self._sock.settimeout(timeout)
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout as exc:
                raise Timeout(f"no response within {timeout:.0f}s") from exc
            if chunk == b"":
                raise ProcessExit("external model closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class ExternalModelClient:
    """Client for black-box models behind the wire protocol.

    Parameters
    ----------
    command : str or list of str, optional
        Command line of a child process speaking the protocol on stdio.
    address : str, optional
        ``host:port`` of a TCP server speaking the protocol. Exactly one
        of ``command``/``address`` must be given.
    timeout : float
        Seconds to wait for the handshake and for each response.

    The handshake populates ``classes_``; ``predict_proba`` sends one
    request per batch and validates the response against the
    probability-row contract. Requests are serialized per client.
    """

    def __init__(
        self,
        command: Union[str, Sequence[str], None] = None,
        address: Optional[str] = None,
        timeout: float = 30.0,
    ):
        if (command is None) == (address is None):
            raise DimensionMismatch(
                "give exactly one of command= or address="
            )
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 0
        if command is not None:
            argv = shlex.split(command) if isinstance(command, str) else list(command)
            try:
                proc = subprocess.Popen(
                    argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                )
            except OSError as exc:
                raise ProcessExit(f"cannot launch {argv[0]!r}: {exc}") from exc
            self._channel = _PipeChannel(proc)
        else:
            host, _, port = address.rpartition(":")
            try:
                sock = socket.create_connection(
                    (host or "127.0.0.1", int(port)), timeout=self.timeout
                )
            except (OSError, ValueError) as exc:
                raise ProcessExit(
                    f"cannot connect to {address!r}: {exc}"
                ) from exc
            self._channel = _SocketChannel(sock)
        handshake = self._read_message()
        classes = handshake.get("classes")
        if not isinstance(classes, list) or not classes:
            raise ProtocolViolation(
                "handshake must carry a non-empty 'classes' list"
            )
        self.classes_ = np.asarray([str(c) for c in classes], dtype=object)

    def _read_message(self) -> dict:
        line = self._channel.recv_line(self.timeout)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(
                f"response is not valid JSON: {line[:80]!r}"
            ) from exc
        if not isinstance(msg, dict):
            raise ProtocolViolation("response is not a JSON object")
        return msg

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("predict_proba expects an (n, d) batch")
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            payload = json.dumps(
                {"id": request_id, "series": X.tolist()}
            ).encode()
            self._channel.send_line(payload)
            msg = self._read_message()
        if msg.get("id") != request_id:
            raise ProtocolViolation(
                f"response id {msg.get('id')!r} != request id {request_id}"
            )
        if "probs" not in msg:
            raise ProtocolViolation("response lacks 'probs'")
        try:
            probs = np.asarray(msg["probs"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProtocolViolation(
                "'probs' is not a rectangular numeric matrix"
            ) from exc
        return validate_probability_rows(probs, X.shape[0], len(self.classes_))

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "ExternalModelClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_model(
    command: Union[str, Sequence[str], None] = None,
    address: Optional[str] = None,
    timeout: float = 30.0,
) -> ExternalModelClient:
    """Connect to an external model (stdio child process or TCP server)."""
    return ExternalModelClient(command=command, address=address, timeout=timeout)
