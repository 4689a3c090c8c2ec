package org.joda.time.format;

import org.joda.time.ReadablePeriod;

public class PeriodFormatter {
    private final String pattern;

    public PeriodFormatter(String pattern) {
        this.pattern = pattern;
    }

    public String print(ReadablePeriod period) {
        return pattern.replace("%d", String.valueOf(period.getDays()));
    }
}
