"""
Data processing and formatting utilities.

Every table the CLI writes goes through here so each CSV carries the
config hash of the run that produced it.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.helpers import retry_on_error

logger = logging.getLogger("sfsci.data")

ABLATION_COLUMNS = ['row', 'stages', 'adapters_on', 'tta_on', 'psnr', 'ssim', 'params', 'macs']


class DataProcessor:
    """Format training histories, traces and reports as DataFrames."""

    @staticmethod
    def format_loss_history(history: Sequence[Any], loss_name: str = 'loss') -> pd.DataFrame:
        """
        Format a per-epoch loss history.

        Args:
            history: Floats (one per epoch) or dicts of loss components
            loss_name: Column name used for plain float histories

        Returns:
            DataFrame with an ``epoch`` column first
        """
        if not history:
            return pd.DataFrame(columns=['epoch', loss_name])

        if isinstance(history[0], dict):
            df = pd.DataFrame(list(history))
            if 'epoch' not in df.columns:
                df.insert(0, 'epoch', range(1, len(df) + 1))
            return df

        return pd.DataFrame({'epoch': range(1, len(history) + 1), loss_name: list(history)})

    @staticmethod
    def format_tta_trace(trace: List[Dict], sample: Optional[int] = None) -> pd.DataFrame:
        """
        Format a per-iteration TTA trace.

        Args:
            trace: Rows with iteration, l_im, l_ker, total, best_loss, [psnr], elapsed_s
            sample: Optional sample index added as the first column
        """
        df = pd.DataFrame(trace)
        if sample is not None and not df.empty:
            df.insert(0, 'sample', sample)
        return df

    @staticmethod
    def mean_trace(traces: List[pd.DataFrame]) -> pd.DataFrame:
        """Average several TTA traces per iteration."""
        if not traces:
            return pd.DataFrame()
        combined = pd.concat(traces, ignore_index=True)
        numeric = combined.drop(columns=['sample'], errors='ignore')
        return numeric.groupby('iteration', as_index=False).mean()

    @staticmethod
    def format_metrics(report) -> pd.DataFrame:
        """One row per scene with psnr and ssim."""
        rows = [
            {'scene': i, 'psnr': p, 'ssim': s}
            for i, (p, s) in enumerate(report.per_scene)
        ]
        return pd.DataFrame(rows, columns=['scene', 'psnr', 'ssim'])

    @staticmethod
    def format_ablation(rows: List[Dict]) -> pd.DataFrame:
        """Ablation rows in a fixed column order."""
        df = pd.DataFrame(rows)
        available_columns = [col for col in ABLATION_COLUMNS if col in df.columns]
        return df[available_columns]

    @staticmethod
    def format_filter_comparison(learned: np.ndarray, closed_form: np.ndarray) -> pd.DataFrame:
        """
        Learned vs closed-form frequency responses, one row per bin.

        Args:
            learned: Complex or real response (C, H, W)
            closed_form: Real Wiener response (C, H, W)

        Returns:
            DataFrame with channel, k1, k2, learned, closed_form
        """
        learned = np.asarray(learned)
        closed_form = np.asarray(closed_form)
        channel, k1, k2 = np.indices(closed_form.shape)
        return pd.DataFrame({
            'channel': channel.ravel(),
            'k1': k1.ravel(),
            'k2': k2.ravel(),
            'learned': np.real(learned).ravel(),
            'closed_form': closed_form.ravel()
        })

    @staticmethod
    @retry_on_error(max_attempts=3, wait_seconds=1)
    def write_csv(df: pd.DataFrame, path: Path, config_hash: str) -> Path:
        """
        Write ``df`` to ``path`` with a ``config_hash`` column.

        Args:
            df: Table to write
            path: Destination CSV
            config_hash: Hash of the experiment config that produced it

        Returns:
            The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        out = df.copy()
        out['config_hash'] = config_hash
        out.to_csv(path, index=False)
        logger.info(f"Wrote {len(out)} rows to {path}")
        return path
