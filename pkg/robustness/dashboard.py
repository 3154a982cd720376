from django.db.models import Count, Q

from .evaluation import Metric
from .models import Experiment, ResultRow, SweepCell


def get_dashboard_stats(request, context):
    """
    Dashboard callback for django-unfold.
    Summarises stored experiments, cell progress and the latest End-removal NDCG variation.
    """
    cells = SweepCell.objects.aggregate(
        total=Count('id'),
        done=Count('id', filter=Q(status=SweepCell.Status.DONE)),
        failed=Count('id', filter=Q(status=SweepCell.Status.FAILED)),
    )

    # largest removal count of the most recent sweep that has End rows
    latest_end = (
        ResultRow.objects.filter(scenario='end', metric=f"{Metric.NDCG.value}_pct")
        .select_related('experiment')
        .order_by('-experiment__created_at', '-n', 'seed')
        .first()
    )
    if latest_end is not None and latest_end.value is not None:
        end_metric = f"{latest_end.value:+.1f} %"
        end_footer = f"{latest_end.experiment.name}, n={latest_end.n}, seed {latest_end.seed}"
    else:
        end_metric = "-"
        end_footer = "No End-removal results yet"

    recent = []
    for experiment in Experiment.objects.annotate(
        n_cells=Count('cells'),
        n_done=Count('cells', filter=Q(cells__status=SweepCell.Status.DONE)),
    )[:10]:
        recent.append({
            'name': experiment.name,
            'kind': experiment.get_kind_display(),
            'dataset': experiment.dataset,
            'model': experiment.model_kind,
            'progress': f"{experiment.n_done}/{experiment.n_cells}",
            'created_at': experiment.created_at,
        })

    context.update({
        "cards": [
            {
                "title": "Experiments",
                "metric": str(Experiment.objects.count()),
                "footer": f"{Experiment.objects.filter(kind=Experiment.Kind.SWEEP).count()} sweeps",
                "icon": "science",
            },
            {
                "title": "Cells",
                "metric": f"{cells['done']}/{cells['total']}",
                "footer": f"{cells['failed']} failed",
                "icon": "grid_view",
            },
            {
                "title": "End removal NDCG",
                "metric": end_metric,
                "footer": end_footer,
                "icon": "trending_down",
            },
        ],
        "recent_experiments": recent,
    })
    return context
