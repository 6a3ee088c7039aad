"""Clustered federated learning simulation: SR-FCA with local, global and IFCA baselines."""

from .aggregation import mean, trimmed_mean_gd, trmean
from .baselines import IfcaConfig, fedavg_global, ifca, train_local
from .data import (
    ClientDataset,
    FederatedDataset,
    SyntheticSpec,
    gen_mixture_linreg,
    load_federated_csv,
    make_transform_splits,
    resample_clients,
    save_federated_csv,
)
from .distance import DistanceKind, dist_cross_loss, dist_l2, pairwise_matrix
from .graphclust import Clustering, correlation_cluster, filter_min_size, misclustering, threshold_graph
from .models import ModelKind, Split, TrainConfig, gradient, local_train, loss, project
from .srfca import ClusterState, SrfcaConfig, merge, one_shot, recluster, refine, sr_fca

__version__ = "0.1.0"
