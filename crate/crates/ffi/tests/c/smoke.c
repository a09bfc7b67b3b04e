#include <math.h>
#include <stdio.h>

#include "sivi.h"

#define CHECK(call)                                                            \
    do {                                                                       \
        SiviStatus status_ = (call);                                           \
        if (status_ != SIVI_STATUS_OK) {                                       \
            const char *msg_ = sivi_last_error_message();                      \
            fprintf(stderr, "%s failed with %d: %s\n", #call, (int)status_,   \
                    msg_ ? msg_ : "(no message)");                             \
            return 1;                                                          \
        }                                                                      \
    } while (0)

int main(void) {
    SiviProblem *problem = NULL;
    SiviTrace *trace = NULL;
    SiviSolverOptions options;
    SiviRecord record;
    double x[3];

    CHECK(sivi_problem_example1_new(0.0, &problem));
    CHECK(sivi_solver_options_default(&options));
    options.eta = 4.0;
    options.iters = 200;
    options.cap = 1;
    CHECK(sivi_solve(problem, &options, &trace));
    size_t n = sivi_trace_len(trace);
    CHECK(sivi_trace_record(trace, n - 1, &record));
    CHECK(sivi_trace_iterate(trace, n - 1, x, 3));

    if (sivi_trace_record(trace, n, &record) != SIVI_STATUS_INVALID_ARGUMENT ||
        sivi_last_error_message() == NULL) {
        fprintf(stderr, "out-of-range record not reported\n");
        return 1;
    }
    CHECK(sivi_trace_record(trace, n - 1, &record));
    printf("records=%zu k=%zu err=%.3e x=[%.6f %.6f %.6f]\n", n, record.k,
           record.err, x[0], x[1], x[2]);

    sivi_trace_free(trace);
    sivi_problem_free(problem);
    return record.err < 1e-6 && fabs(x[1] - 0.4) < 1e-6 ? 0 : 1;
}
